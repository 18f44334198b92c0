"""Client SDK for the tgpt forecast service.

Holds zero forecasting logic: pure transport plus schema mapping between
long-format tables and the service wire format.
"""

from tgpt_client.client import (
    AuthenticationError,
    CapabilityError,
    ClientConfig,
    ClientError,
    ClientValidationError,
    RequestRejectedError,
    RequestSchemaError,
    ServiceUnavailableError,
    TgptClient,
    TransportFailure,
    forecast_payload,
    table_from_payload,
)

__version__ = "0.1.0"

__all__ = [
    "TgptClient",
    "ClientConfig",
    "ClientError",
    "ClientValidationError",
    "AuthenticationError",
    "RequestSchemaError",
    "RequestRejectedError",
    "ServiceUnavailableError",
    "TransportFailure",
    "CapabilityError",
    "forecast_payload",
    "table_from_payload",
]
