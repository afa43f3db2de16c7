"""Exception hierarchy shared by every stage of the pipeline."""


class BandMatchError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""

    code = "error"


# features
class ZeroVector(BandMatchError, ValueError):
    code = "zero_vector"


class InvalidScene(BandMatchError, ValueError):
    code = "invalid_scene"


class FormatError(BandMatchError):
    code = "format_error"


class TruncatedFile(FormatError):
    code = "truncated_file"


# retrieval
class EmptyInput(BandMatchError, ValueError):
    code = "empty_input"


class TooFewDescriptors(BandMatchError, ValueError):
    code = "too_few_descriptors"


class DimensionMismatch(BandMatchError, ValueError):
    code = "dimension_mismatch"


# mbr / engine planning
class EmptyGraph(BandMatchError, ValueError):
    code = "empty_graph"


class BudgetTooSmall(BandMatchError, ValueError):
    code = "budget_too_small"


class NonTermination(BandMatchError, RuntimeError):
    code = "non_termination"


# hashmatch
class HashMismatch(BandMatchError, ValueError):
    code = "hash_mismatch"


# verify
class CoincidentPoint(BandMatchError, ValueError):
    code = "coincident_point"


class TooFewMatches(BandMatchError, ValueError):
    code = "too_few_matches"


class NoModel(BandMatchError, RuntimeError):
    code = "no_model"


# engine
class CapacityExceeded(BandMatchError, RuntimeError):
    code = "capacity_exceeded"


class NotResident(BandMatchError, KeyError):
    code = "not_resident"


class ConfigError(BandMatchError, ValueError):
    """Invalid run configuration; the CLI maps this to exit code 2."""

    code = "config_error"
