"""Analytic quantum predictions for polarization-entangled photon pairs.

Conventions used throughout the package:

- Two-qubit basis order is |HH>, |HV>, |VH>, |VV>.
- The non-maximally entangled pure state is
      (r|HH> + e^{i phi}|VV>) / sqrt(1 + r^2),
  with r >= 0 a dimensionless amplitude ratio. r = 1 is maximally
  entangled, r = 0 is the product state |VV>.
- All analyzer angles at the public interfaces are in DEGREES, measured
  from horizontal; conversion to radians happens exactly once, inside
  this module. A polarizer at angle x transmits cos(x)|H> + sin(x)|V>.
- "Singles" probabilities are transmission probabilities at one arm
  irrespective of the other; "coincidence" is joint transmission.

For the pure state with phase 0 the closed forms are

    p_single(x)      = (r^2 cos^2 x + sin^2 x) / (1 + r^2)
    p_coinc(x, y)    = (r cos x cos y + sin x sin y)^2 / (1 + r^2)

and the general density-matrix path evaluates the same quantities as
Tr[rho (P_x (x) P_y)].  Both routes are exposed so they can be checked
against each other.

The per-trial detection-probability Bell combination handled here is the
single-pair linearization: pair production enters linearly through the
mean pair number, detector efficiency multiplies amplitudes once, and
unpolarized background adds to the singles only.  Multi-pair pileup and
background-signal coincidences belong to the Monte-Carlo engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ValidationError

Arm = Literal["A", "B"]

_HERMITICITY_TOL = 1e-10
_NORM_TOL = 1e-12


def _canonical_angle(angle_deg: float) -> float:
    """Map an analyzer angle to the canonical range (-90, 90] degrees."""
    angle_deg = float(angle_deg)
    if not math.isfinite(angle_deg):
        raise ValidationError(f"analyzer angle must be finite, got {angle_deg!r}")
    x = (angle_deg + 90.0) % 180.0 - 90.0
    return 90.0 if x == -90.0 else x


@dataclass(frozen=True, eq=False)
class PolarizationState:
    """Two-qubit polarization state.

    kind "eberhard-pure" stores (r, phase); kind "density-matrix" stores a
    validated 4x4 density matrix.  Use :func:`make_eberhard_state` or
    :func:`density_matrix_state` instead of the raw constructor.
    """

    kind: Literal["eberhard-pure", "density-matrix"]
    r: float = 1.0
    phase: float = 0.0
    rho: np.ndarray | None = None

    def amplitudes(self) -> np.ndarray:
        """State vector in the |HH>,|HV>,|VH>,|VV> basis (pure kind only)."""
        if self.kind != "eberhard-pure":
            raise ValidationError("amplitudes are defined for the pure kind only")
        norm = math.sqrt(1.0 + self.r * self.r)
        return np.array(
            [self.r / norm, 0.0, 0.0, np.exp(1j * self.phase) / norm],
            dtype=complex,
        )

    def density_matrix(self) -> np.ndarray:
        """The 4x4 density matrix for either kind."""
        if self.kind == "density-matrix":
            return self.rho.copy()
        psi = self.amplitudes()
        return np.outer(psi, psi.conj())


def make_eberhard_state(r: float, phase: float = 0.0) -> PolarizationState:
    """Build the pure state (r|HH> + e^{i phase}|VV>)/sqrt(1+r^2).

    phase is in radians.  Raises ValidationError for negative or
    non-finite r.
    """
    if not (math.isfinite(r) and r >= 0.0):
        raise ValidationError(f"amplitude ratio r must be finite and >= 0, got {r!r}")
    if not math.isfinite(phase):
        raise ValidationError(f"phase must be finite, got {phase!r}")
    state = PolarizationState(kind="eberhard-pure", r=float(r), phase=float(phase))
    # the amplitude vector is normalized by construction; keep the check as
    # a cheap guard against pathological r
    norm = np.linalg.norm(state.amplitudes())
    if abs(norm - 1.0) > _NORM_TOL:
        raise ValidationError(f"state normalization failed: |psi| = {norm}")
    return state


def density_matrix_state(rho: np.ndarray) -> PolarizationState:
    """Wrap a 4x4 density matrix, validating the usual invariants."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValidationError(f"density matrix must be 4x4, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > _HERMITICITY_TOL:
        raise ValidationError("density matrix is not Hermitian within 1e-10")
    if abs(np.trace(rho).real - 1.0) > _HERMITICITY_TOL:
        raise ValidationError(f"density matrix trace is {np.trace(rho).real}, not 1")
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -_HERMITICITY_TOL:
        raise ValidationError(f"density matrix not positive semidefinite ({eigs.min()})")
    return PolarizationState(kind="density-matrix", rho=rho)


@dataclass(frozen=True)
class MeasurementSettings:
    """The four analyzer angles {a, a', b, b'} in degrees from horizontal.

    Angles are normalized into (-90, 90] on construction; a polarizer is
    180-degree periodic so this loses nothing.
    """

    a: float
    a_prime: float
    b: float
    b_prime: float

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            object.__setattr__(self, name, _canonical_angle(getattr(self, name)))

    def alice(self, index: int) -> float:
        return self.a if index == 0 else self.a_prime

    def bob(self, index: int) -> float:
        return self.b if index == 0 else self.b_prime

    def pair_angles(self, combo: int) -> tuple[float, float]:
        """Angles for setting-pair index 0=(a,b), 1=(a,b'), 2=(a',b), 3=(a',b')."""
        return self.alice(combo >> 1), self.bob(combo & 1)

    def reflected(self) -> "MeasurementSettings":
        return MeasurementSettings(-self.a, -self.a_prime, -self.b, -self.b_prime)


@dataclass(frozen=True)
class DetectionModel:
    """Detector and source parameters for one experimental arm pair.

    eta_a/eta_b are per-arm detection probabilities, pair_mean the mean
    pair number per trial, bg_a/bg_b unpolarized background-count
    probabilities per trial per arm.  The pulse/trial geometry describes
    the gated burst: pulses_per_trial pulses spaced pulse_period_ns inside
    a trial_period_ns trial, detections smeared by Gaussian jitter.
    """

    eta_a: float = 0.75
    eta_b: float = 0.75
    pair_mean: float = 0.033
    bg_a: float = 0.0
    bg_b: float = 0.0
    pulses_per_trial: int = 240
    pulse_period_ns: float = 8.33
    trial_period_ns: float = 40_000.0
    jitter_sigma_ns: float = 500.0

    def __post_init__(self):
        for name in ("eta_a", "eta_b", "bg_a", "bg_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must be a probability in [0,1], got {v!r}")
        if not (math.isfinite(self.pair_mean) and self.pair_mean >= 0.0):
            raise ValidationError(f"pair_mean must be >= 0, got {self.pair_mean!r}")
        if self.pulses_per_trial < 1:
            raise ValidationError("pulses_per_trial must be >= 1")
        if self.pulse_period_ns <= 0 or self.trial_period_ns <= 0:
            raise ValidationError("pulse and trial periods must be positive")
        if self.pulses_per_trial * self.pulse_period_ns > self.trial_period_ns:
            raise ValidationError("pulse burst does not fit inside the trial period")
        if self.jitter_sigma_ns < 0:
            raise ValidationError("jitter_sigma_ns must be >= 0")

    @classmethod
    def ideal(cls, pair_mean: float = 1.0) -> "DetectionModel":
        """Unit-efficiency, background-free model (analytic references)."""
        return cls(eta_a=1.0, eta_b=1.0, pair_mean=pair_mean, bg_a=0.0, bg_b=0.0)


# ---------------------------------------------------------------------------
# projection probabilities


def _projector(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c * c, c * s], [c * s, s * s]])


def singles_prob(state: PolarizationState, angle_deg, arm: Arm = "A"):
    """Transmission probability at one arm's analyzer.

    Accepts scalar or ndarray angles for the pure kind; the density-matrix
    kind is evaluated per scalar angle.
    """
    if arm not in ("A", "B"):
        raise ValidationError(f"arm must be 'A' or 'B', got {arm!r}")
    if state.kind == "eberhard-pure":
        x = np.deg2rad(angle_deg)
        c2 = np.cos(x) ** 2
        return (state.r**2 * c2 + (1.0 - c2)) / (1.0 + state.r**2)
    p = _projector(math.radians(float(angle_deg)))
    op = np.kron(p, np.eye(2)) if arm == "A" else np.kron(np.eye(2), p)
    return float(np.trace(state.rho @ op).real)


def coincidence_prob(state: PolarizationState, alpha_deg, beta_deg):
    """Joint transmission probability with analyzers at alpha (A) and beta (B)."""
    if state.kind == "eberhard-pure":
        a = np.deg2rad(alpha_deg)
        b = np.deg2rad(beta_deg)
        r = state.r
        ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
        cross = 2.0 * r * math.cos(state.phase) * ca * cb * sa * sb
        return (r * r * ca * ca * cb * cb + sa * sa * sb * sb + cross) / (1.0 + r * r)
    op = np.kron(_projector(math.radians(float(alpha_deg))),
                 _projector(math.radians(float(beta_deg))))
    return float(np.trace(state.rho @ op).real)


def correlation_E(state: PolarizationState, alpha_deg: float, beta_deg: float) -> float:
    """Two-output correlation E = p(++)+p(--)-p(+-)-p(-+) at unit efficiency.

    Uses the identity E = 4 p12 - 2 p1 - 2 p2 + 1, which holds because the
    two analyzer outputs are complementary projectors.
    """
    p12 = coincidence_prob(state, alpha_deg, beta_deg)
    p1 = singles_prob(state, alpha_deg, "A")
    p2 = singles_prob(state, beta_deg, "B")
    return float(4.0 * p12 - 2.0 * p1 - 2.0 * p2 + 1.0)


def chsh_value(state: PolarizationState, settings: MeasurementSettings) -> float:
    """S = E(a,b) + E(a,b') + E(a',b) - E(a',b')."""
    return (
        correlation_E(state, settings.a, settings.b)
        + correlation_E(state, settings.a, settings.b_prime)
        + correlation_E(state, settings.a_prime, settings.b)
        - correlation_E(state, settings.a_prime, settings.b_prime)
    )


def ch_terms(state: PolarizationState, settings: MeasurementSettings):
    """The six probabilities entering the detection-probability inequality.

    Returns (p12(a,b), p12(a,b'), p12(a',b), p12(a',b'), p1(a), p2(b)).
    """
    return (
        coincidence_prob(state, settings.a, settings.b),
        coincidence_prob(state, settings.a, settings.b_prime),
        coincidence_prob(state, settings.a_prime, settings.b),
        coincidence_prob(state, settings.a_prime, settings.b_prime),
        singles_prob(state, settings.a, "A"),
        singles_prob(state, settings.b, "B"),
    )


def ch_value_from_probs(p_ab, p_abp, p_apb, p_apbp, p1_a, p2_b, det: DetectionModel):
    """Per-trial CH combination from raw quantum probabilities.

    Single-pair linearization: coincidences scale with eta_a*eta_b*mu,
    singles with eta*mu plus the unpolarized background.  Broadcasts over
    ndarray probability inputs.
    """
    mu = det.pair_mean
    ee = det.eta_a * det.eta_b * mu
    num = ee * (p_ab + p_abp + p_apb - p_apbp)
    s1 = det.eta_a * mu * p1_a + det.bg_a
    s2 = det.eta_b * mu * p2_b + det.bg_b
    return num - s1 - s2


def ch_prime_from_probs(p_ab, p_abp, p_apb, p_apbp, p1_a, p2_b, det: DetectionModel):
    """Ratio form of the same combination: coincidence sum over singles sum."""
    mu = det.pair_mean
    num = det.eta_a * det.eta_b * mu * (p_ab + p_abp + p_apb - p_apbp)
    den = det.eta_a * mu * p1_a + det.bg_a + det.eta_b * mu * p2_b + det.bg_b
    return num / den


def ch_value(state: PolarizationState, settings: MeasurementSettings,
             det: DetectionModel) -> float:
    """Expected per-trial CH value B; B > 0 is unreachable classically."""
    return float(ch_value_from_probs(*ch_terms(state, settings), det))


def ch_prime_value(state: PolarizationState, settings: MeasurementSettings,
                   det: DetectionModel) -> float:
    """Expected ratio-form Bell parameter B'; B' > 1 is the violation condition."""
    return float(ch_prime_from_probs(*ch_terms(state, settings), det))


# ---------------------------------------------------------------------------
# entanglement measures


def concurrence(state: PolarizationState) -> float:
    """Concurrence in [0,1]; 2r/(1+r^2) for the pure family, Wootters otherwise."""
    if state.kind == "eberhard-pure":
        return 2.0 * state.r / (1.0 + state.r**2)
    rho = state.rho
    sy = np.array([[0, -1j], [1j, 0]])
    yy = np.kron(sy, sy)
    rho_tilde = yy @ rho.conj() @ yy
    eigs = np.linalg.eigvals(rho @ rho_tilde)
    lam = np.sort(np.sqrt(np.clip(eigs.real, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


_BASIS_ANGLE = {"HV": 0.0, "DA": 45.0}


def visibility(state: PolarizationState, basis: str = "HV") -> float:
    """Two-photon interference visibility in the HV or DA basis.

    With both analyzers locked to the basis, compares coincidences at the
    parallel orientation against the orthogonal one,
    (C_par - C_orth)/(C_par + C_orth), taking the brighter of the two
    parallel orientations.  A fringe with no coincidences at all reports 0.
    """
    try:
        chi = _BASIS_ANGLE[basis.upper()]
    except KeyError:
        raise ValidationError(f"basis must be 'HV' or 'DA', got {basis!r}") from None
    best = 0.0
    seen_fringe = False
    for theta in (chi, chi + 90.0):
        c_par = coincidence_prob(state, theta, theta)
        c_orth = coincidence_prob(state, theta, theta + 90.0)
        tot = c_par + c_orth
        if tot > 1e-300:
            seen_fringe = True
            best = max(best, (c_par - c_orth) / tot)
    return best if seen_fringe else 0.0
