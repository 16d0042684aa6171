"""Exception types shared across the package."""


class QIntentError(Exception):
    """Base class for all package errors."""


class ConfigError(QIntentError):
    """Invalid or inconsistent configuration."""


class CatalogError(QIntentError):
    """Catalog, taxonomy, or fixture data could not be loaded."""


class IndexIntegrityError(QIntentError):
    """Semantic index does not match the entity store or encoder."""


class ClassificationError(QIntentError):
    """The reasoning engine failed to produce a valid intent tuple."""


class ToolError(QIntentError):
    """External search tool call failed (transport, timeout)."""


class CacheError(QIntentError):
    """Cache storage failure; distinct from an ordinary miss."""


class ProviderError(QIntentError):
    """Base class for live provider client failures."""


class ProviderAuthError(ProviderError):
    """Credential rejected; never retried."""


class ProviderQuotaError(ProviderError):
    """Quota or rate limit exhausted; never retried."""


class ProviderTimeoutError(ProviderError):
    """Request exceeded the configured timeout."""


class ProviderTransportError(ProviderError):
    """Connection or HTTP-level failure after retries."""
