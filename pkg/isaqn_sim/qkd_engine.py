"""Pilot phase recovery, parameter estimation and asymptotic secret key rate."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.special import xlogy

from .coherent_receiver import (
    DetectorParams,
    QuadratureStream,
    band_select,
    demodulate,
    frame_sync,
)
from .const import (
    MIN_ALIGNMENT_CORRELATION,
    MIN_ESTIMATION_SYMBOLS,
    MIN_PILOT_SNR,
)
from .exceptions import (
    AlignmentError,
    InsufficientDataError,
    InvalidArgumentError,
    IsaqnError,
    PhaseEstimateUnreliableError,
)
from .fiber_channel import FiberConstants, transmittance
from .network import Capture, NodeFailure, simulate_capture
from .signal_core import FrameLayout, SlotKind, SymbolSequence

if TYPE_CHECKING:
    from .scenario import ScenarioConfig

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelEstimate:
    """Channel parameters estimated from correlated data."""

    t_hat: float
    eps_hat: float
    v_a_hat: float
    n_used: int

    @property
    def eps_negative(self) -> bool:
        """Whether sampling noise pushed the excess noise estimate below zero."""
        return self.eps_hat < 0


@dataclass(frozen=True)
class SkrReport:
    """Asymptotic key rate for reverse reconciliation with heterodyne detection."""

    v_a: float
    transmittance: float
    excess_noise: float
    quantum_efficiency: float
    electronic_noise: float
    beta: float
    rep_rate_hz: float
    chi_line: float
    chi_het: float
    chi_tot: float
    i_ab: float
    chi_be: float
    k_r: float
    k_bits_per_s: float
    lambdas: tuple[float, float, float, float, float]
    abcd: tuple[float, float, float, float]
    node_id: int | None = None
    estimate: ChannelEstimate | None = None
    qkd_suspended: bool = False

    @property
    def aborted(self) -> bool:
        """Whether the session terminates because no key can be distilled."""
        return self.k_r <= 0 or self.qkd_suspended

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping."""
        data = asdict(self)
        data["lambdas"] = list(self.lambdas)
        data["abcd"] = dict(zip("ABCD", self.abcd, strict=True))
        data["aborted"] = self.aborted
        return data


@dataclass(frozen=True, eq=False)
class PhaseTrace:
    """Per-pilot phase estimates on an aligned stream."""

    positions: np.ndarray
    phase: np.ndarray
    layout: FrameLayout

    def interpolate(self, n_symbols: int) -> np.ndarray:
        """Phase at every symbol slot by linear interpolation between pilots."""
        return np.interp(np.arange(n_symbols), self.positions, self.phase)


def pilot_snr(pilots: np.ndarray) -> float:
    """
    Pilot SNR from magnitude statistics.

    Noise is taken from the spread of successive pilot magnitudes so slow
    amplitude changes do not count as noise.
    """
    magnitudes = np.abs(pilots)
    if magnitudes.size < 2:  # noqa: PLR2004
        return math.inf
    steps = np.diff(magnitudes)
    sigma = 1.4826 * np.median(np.abs(steps - np.median(steps))) / math.sqrt(2)
    if sigma == 0:
        return math.inf
    return float(np.mean(magnitudes) ** 2 / (2 * sigma**2))


def pilot_samples(
    stream: QuadratureStream, layout: FrameLayout
) -> tuple[np.ndarray, np.ndarray]:
    """Pilot slot positions and values of an aligned stream, SNR-checked."""
    if stream.frame_offset is None:
        raise InvalidArgumentError("Stream has no frame offset; run frame_sync first")

    aligned = stream.aligned()
    kinds = layout.slot_kinds(len(aligned))
    positions = np.flatnonzero(kinds == SlotKind.PILOT)
    pilots = aligned.complex[positions]

    snr = pilot_snr(pilots)
    if snr < MIN_PILOT_SNR:
        raise PhaseEstimateUnreliableError(
            f"Pilot SNR {snr:.2f} is below {MIN_PILOT_SNR}"
        )
    return positions, pilots


def pilot_phase_estimate(
    stream: QuadratureStream, layout: FrameLayout, smoothing: int = 1
) -> PhaseTrace:
    """Estimate the channel phase at every pilot as atan2(P, X)."""
    positions, pilots = pilot_samples(stream, layout)
    if smoothing > 1:
        pilots = uniform_filter1d(pilots.real, smoothing, mode="nearest") + (
            1j * uniform_filter1d(pilots.imag, smoothing, mode="nearest")
        )
    phase = np.unwrap(np.arctan2(pilots.imag, pilots.real))
    return PhaseTrace(positions, phase, layout)


def phase_correct(stream: QuadratureStream, trace: PhaseTrace) -> QuadratureStream:
    """Derotate every symbol by the interpolated phase and keep quantum slots."""
    aligned = stream.aligned() if stream.frame_offset is not None else stream
    theta = trace.interpolate(len(aligned))
    corrected = aligned.complex * np.exp(-1j * theta)
    quantum = trace.layout.slot_kinds(len(aligned)) == SlotKind.QUANTUM
    return QuadratureStream.from_complex(corrected[quantum], stream.symbol_rate)


def estimate_params(
    alice: SymbolSequence,
    bob: QuadratureStream,
    det: DetectorParams,
    fraction: float = 1.0,
    seed: int = 0,
) -> ChannelEstimate:
    """Estimate T, excess noise and V_A from aligned transmit and receive data."""
    if len(alice) != len(bob):
        raise AlignmentError(
            f"Alice holds {len(alice)} symbols, Bob holds {len(bob)}"
        )
    if not 0 < fraction <= 1:
        raise InvalidArgumentError(f"Sample fraction must be in (0, 1], got {fraction}")

    index = np.arange(len(alice))
    if fraction < 1:
        rng = np.random.default_rng(seed)
        index = np.sort(rng.choice(index, int(fraction * index.size), replace=False))
    if index.size < MIN_ESTIMATION_SYMBOLS:
        raise InsufficientDataError(
            f"Estimation needs {MIN_ESTIMATION_SYMBOLS} symbols, got {index.size}"
        )

    # Alice's quadratures in the per-quadrature V_A convention
    a_quads = (math.sqrt(2) * alice.x[index], math.sqrt(2) * alice.p[index])
    b_quads = (bob.x[index], bob.p[index])

    gains = []
    for a, b in zip(a_quads, b_quads, strict=True):
        rho = np.corrcoef(a, b)[0, 1]
        if not rho >= MIN_ALIGNMENT_CORRELATION:
            raise AlignmentError(
                f"Correlation {rho:.3f} at lag 0 is below {MIN_ALIGNMENT_CORRELATION}"
            )
        gains.append(np.dot(a, b) / np.dot(a, a))
    t = float(np.mean(gains))

    noise = 1.0 + det.electronic_noise_snu
    eps_q = [
        (np.var(b - t * a) - noise) / t**2
        for a, b in zip(a_quads, b_quads, strict=True)
    ]
    t_hat = 2 * t**2 / det.quantum_efficiency
    if t_hat > 1:
        _LOGGER.warning("Transmittance estimate %.4f exceeds 1, capped", t_hat)
        t_hat = 1.0

    estimate = ChannelEstimate(
        t_hat=t_hat,
        eps_hat=float(np.mean(eps_q)),
        v_a_hat=float(np.var(alice.x[index]) + np.var(alice.p[index])),
        n_used=int(index.size),
    )
    if estimate.eps_negative:
        _LOGGER.debug("Excess noise estimate is negative: %.5f", estimate.eps_hat)
    return estimate


def entropy_g(x: float) -> float:
    """Von Neumann entropy term G(x) = (x+1) log2(x+1) - x log2 x, G(0) = 0."""
    x = max(x, 0.0)
    return float((xlogy(x + 1, x + 1) - xlogy(x, x)) / math.log(2))


def symplectic_eigenvalues(
    v: float, t: float, chi_line: float, chi_het: float
) -> tuple[tuple[float, float, float, float], tuple[float, float, float, float, float]]:
    """Closed-form A, B, C, D and the five symplectic eigenvalues."""
    chi_tot = chi_line + chi_het / t
    a = v**2 * (1 - 2 * t) + 2 * t + t**2 * (v + chi_line) ** 2
    b = t**2 * (v * chi_line + 1) ** 2
    scale = (t * (v + chi_tot)) ** 2
    c = (
        a * chi_het**2
        + b
        + 1
        + 2 * chi_het * (v * math.sqrt(b) + t * (v + chi_line))
        + 2 * t * (v**2 - 1)
    ) / scale
    d = (v + math.sqrt(b) * chi_het) ** 2 / scale

    # Smaller roots from lambda1*lambda2 = sqrt(B) and lambda3*lambda4 = sqrt(D)
    lam1 = math.sqrt(0.5 * (a + math.sqrt(max(a**2 - 4 * b, 0.0))))
    lam2 = math.sqrt(b) / lam1
    lam3 = math.sqrt(0.5 * (c + math.sqrt(max(c**2 - 4 * d, 0.0))))
    lam4 = math.sqrt(d) / lam3
    return (a, b, c, d), (lam1, lam2, lam3, lam4, 1.0)


def secret_key_rate(  # noqa: PLR0913
    v_a: float,
    t: float,
    eps: float,
    det: DetectorParams,
    beta: float,
    rep_rate_hz: float,
) -> SkrReport:
    """Asymptotic key rate K = R (beta I_AB - chi_BE)."""
    if not 0 < t <= 1:
        raise InvalidArgumentError(f"Transmittance must be in (0, 1], got {t}")
    if not v_a > 0:
        raise InvalidArgumentError(f"Modulation variance must be positive, got {v_a}")
    if not 0 < beta <= 1:
        raise InvalidArgumentError(f"Beta must be in (0, 1], got {beta}")
    if not rep_rate_hz > 0:
        msg = f"Repetition rate must be positive, got {rep_rate_hz}"
        raise InvalidArgumentError(msg)

    eta = det.quantum_efficiency
    v_el = det.electronic_noise_snu
    v = v_a + 1
    chi_line = 1 / t - 1 + eps
    chi_het = (1 + (1 - eta) + 2 * v_el) / eta
    chi_tot = chi_line + chi_het / t
    i_ab = math.log2((v + chi_tot) / (1 + chi_tot))

    abcd, lambdas = symplectic_eigenvalues(v, t, chi_line, chi_het)
    lam1, lam2, lam3, lam4, lam5 = lambdas
    chi_be = (
        entropy_g((lam1 - 1) / 2)
        + entropy_g((lam2 - 1) / 2)
        - entropy_g((lam3 - 1) / 2)
        - entropy_g((lam4 - 1) / 2)
        - entropy_g((lam5 - 1) / 2)
    )
    k_r = beta * i_ab - chi_be

    report = SkrReport(
        v_a=v_a,
        transmittance=t,
        excess_noise=eps,
        quantum_efficiency=eta,
        electronic_noise=v_el,
        beta=beta,
        rep_rate_hz=rep_rate_hz,
        chi_line=chi_line,
        chi_het=chi_het,
        chi_tot=chi_tot,
        i_ab=i_ab,
        chi_be=chi_be,
        k_r=k_r,
        k_bits_per_s=rep_rate_hz * k_r,
        lambdas=lambdas,
        abcd=abcd,
    )
    if report.aborted:
        _LOGGER.warning(
            "No secret key at T=%.4g eps=%.4g: K_r=%.4g, session aborted", t, eps, k_r
        )
    return report


def skr_sweep(  # noqa: PLR0913
    v_a: float,
    lengths_m: np.ndarray,
    eps: float,
    det: DetectorParams,
    beta: float,
    rep_rate_hz: float,
    fiber: FiberConstants,
    n_split: int = 1,
) -> list[SkrReport]:
    """Key rate over a grid of fiber lengths."""
    return [
        secret_key_rate(
            v_a,
            transmittance(float(length), fiber, n_split),
            eps,
            det,
            beta,
            rep_rate_hz,
        )
        for length in lengths_m
    ]


def process_qkd_node(
    capture: Capture, scenario: ScenarioConfig, node_id: int
) -> SkrReport:
    """Run steps 2-4 of the point-to-multipoint protocol for one node."""
    node = capture.nodes[node_id]
    layout = capture.layout

    selected = band_select(capture.detected, capture.registry, node_id)
    stream = demodulate(selected, node.carrier_hz, node.baseband_hz)
    sync = frame_sync(stream, layout.sync_word)
    stream = replace(stream, frame_offset=sync.offset)

    trace = pilot_phase_estimate(stream, layout, smoothing=scenario.phase_smoothing)
    corrected = phase_correct(stream, trace)
    estimate = estimate_params(
        capture.truth[node_id].symbols,
        corrected,
        scenario.detector,
        fraction=scenario.estimation_fraction,
        seed=capture.seed,
    )
    _LOGGER.debug(
        "Node %s estimate: T=%.5f eps=%.5f V_A=%.3f",
        node_id,
        estimate.t_hat,
        estimate.eps_hat,
        estimate.v_a_hat,
    )

    report = secret_key_rate(
        estimate.v_a_hat,
        estimate.t_hat,
        estimate.eps_hat,
        scenario.detector,
        scenario.beta,
        scenario.rep_rate_hz,
    )
    return replace(report, node_id=node_id, estimate=estimate)


def run_qkd_session(
    scenario: ScenarioConfig, seed: int, capture: Capture | None = None
) -> list[SkrReport | NodeFailure]:
    """Simulate a full session and return per-node reports sorted by node id."""
    if capture is None:
        capture = simulate_capture(scenario, seed)

    results: list[SkrReport | NodeFailure] = []
    for node_id in capture.registry.registered_ids():
        try:
            results.append(process_qkd_node(capture, scenario, node_id))
        except IsaqnError as err:
            _LOGGER.error("QKD pipeline failed for node %s: %s", node_id, err)
            results.append(NodeFailure.from_error(node_id, err))
    return results
