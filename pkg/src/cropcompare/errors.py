"""Exception types raised across the toolkit."""


class CropCompareError(Exception):
    """Base class for toolkit errors."""


class GridMismatchError(CropCompareError, ValueError):
    """Rasters that must be co-registered are not."""


class CRSMismatchError(GridMismatchError):
    pass


class RasterFormatError(CropCompareError, ValueError):
    """A raster file cannot be decoded into a supported raster."""


class SchemaError(CropCompareError, ValueError):
    """A config, registry or CSV document violates its schema."""


class UndefinedCorrelationError(CropCompareError, ValueError):
    pass


class EmptyInputError(CropCompareError, ValueError):
    pass
