class PipelineError(ValueError):
    """Domain error raised for bad data, bad configuration or degenerate labels."""


class SchemaError(PipelineError):
    pass


class ModelFormatError(PipelineError):
    pass
