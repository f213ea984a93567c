"""Named converter fixtures used by tests, the CLI and the service."""

from __future__ import annotations

from .physics import ConverterParams

# Desk-scale reference converter: 200 W, 200 V -> 160 V, unity turns ratio,
# 60 uH leakage, 100 kHz, lossless inductor.
FIXTURES: dict[str, ConverterParams] = {
    "dab200": ConverterParams(
        v_in=200.0, v_out=160.0, n=1.0,
        l_lk=60e-6, r_l=0.0, f_s=100e3, p_rated=200.0,
    ),
    "dab200-lossy": ConverterParams(
        v_in=200.0, v_out=160.0, n=1.0,
        l_lk=60e-6, r_l=0.5, f_s=100e3, p_rated=200.0,
    ),
}

DEFAULT_FIXTURE_ID = "dab200"


def fixture_converter(fixture_id: str = DEFAULT_FIXTURE_ID) -> ConverterParams:
    try:
        return FIXTURES[fixture_id]
    except KeyError:
        raise KeyError(f"unknown converter fixture '{fixture_id}'; "
                       f"known: {sorted(FIXTURES)}") from None
