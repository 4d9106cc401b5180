"""Energy unit conversions.

All stored energies are mWh. Carbon intensity is gCO2/kWh and price is
USD/kWh, so every emission/cost attribution goes through :func:`mwh_to_kwh`.
This module is the only place those divisions happen.
"""

MWH_PER_KWH = 1e6


def mwh_to_kwh(mwh: float) -> float:
    return mwh / MWH_PER_KWH


def power_to_mwh(watts: float, hours: float) -> float:
    """Energy drawn by a constant load of `watts` over `hours`."""
    return watts * 1000.0 * hours


def per_inference_mwh(avg_power_w: float, latency_ms: float) -> float:
    """Energy of one inference from its average power draw and duration.

    W * ms = mJ; divide by 3600 to get mWh.
    """
    return avg_power_w * latency_ms / 3600.0
