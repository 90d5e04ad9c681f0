"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1,
MissingArtifactError -> 2, anything else -> 3.
"""


class ContractError(ValueError):
    """An operation was called outside its documented precondition."""


class FormatError(IOError):
    """A file exists but its contents violate the expected layout."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


class MissingArtifactError(FileNotFoundError):
    """A required input (dataset, checkpoint, codec) is not available."""


class DegenerateLatentError(ContractError):
    """Power normalization received an all-zero latent vector."""


class TrainingDivergedError(RuntimeError):
    """A non-finite loss or gradient was produced during training."""

    def __init__(self, step: int, where: str):
        super().__init__(f"non-finite value at step {step} in {where}")
        self.step = step
        self.where = where
