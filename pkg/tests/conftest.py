import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import bellsim as bs

settings.register_profile(
    "ci", derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def reference_counts():
    return bs.reference_run_counts()


@pytest.fixture(scope="session")
def calibrated_reference_model():
    """(state, settings, det) matching the bundled run's singles rates."""
    state = bs.make_eberhard_state(bs.REFERENCE_R)
    sett = bs.reference_settings()
    table = bs.reference_run_counts()
    n = table.n_trials.astype(float)
    mu, bg = bs.calibrate_source_rates(
        0.75,
        float(bs.singles_prob(state, sett.a)), float(table.singles_a[0] / n[0]),
        float(bs.singles_prob(state, sett.a_prime)), float(table.singles_a[2] / n[2]),
    )
    det = bs.DetectionModel(eta_a=0.75, eta_b=0.75, pair_mean=mu, bg_a=bg, bg_b=bg)
    return state, sett, det


def random_strategies(rng: np.random.Generator, count: int):
    """Seeded stream of random instruction-set strategies for soundness sweeps."""
    out = []
    for _ in range(count):
        n_classes = int(rng.integers(1, 8))
        classes = []
        for _ in range(n_classes):
            classes.append(
                bs.LhvClass(
                    weight=int(rng.integers(0, 100)),
                    fires_a=(bool(rng.integers(2)), bool(rng.integers(2))),
                    fires_b=(bool(rng.integers(2)), bool(rng.integers(2))),
                )
            )
        out.append(bs.LhvStrategy(tuple(classes)))
    return out
