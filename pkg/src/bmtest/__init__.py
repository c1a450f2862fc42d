"""Tests for the presence of a Brownian component in high-frequency data."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BMTestError,
    CalibrationError,
    ConfigError,
    DataError,
    DegenerateCutoffError,
    DegenerateStatisticError,
    EmptySeriesError,
    RateConditionError,
)
from .hypotheses import HypothesisLabel  # noqa: F401
from .inference import (  # noqa: F401
    BrownianNullConfig,
    BrownianNullResult,
    NoBrownianNullConfig,
    NoBrownianNullResult,
    s_prime_statistic,
    s_statistic,
    test_brownian_null,
    test_nobrownian_null,
    v_n,
    v_prime_n,
    validate_rate_conditions,
)
from .variation import (  # noqa: F401
    Absolute,
    Percentile,
    SampledPath,
    VolMultiple,
    exceedance_count,
    increments,
    truncated_power_variation,
)
