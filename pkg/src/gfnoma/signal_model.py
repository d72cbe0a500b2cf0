"""Synthetic uplink signal generation for grant-free LDS-NOMA experiments.

This module owns everything between "a cell full of devices" and "a stacked
received vector at the basestation": sparse spreading codebooks, device
geometry and pathloss, Rayleigh fading channels, the block sensing matrix,
instance synthesis, and streaming training-data generation.

Conventions
-----------
* Devices are indexed 0..N-1; supports are sorted tuples/arrays of device
  indices.
* A "slot" is one measurement of all m subcarriers; N_d slots are stacked
  slot-major, so entry ``t*m + j`` of a stacked vector is subcarrier j of
  slot t.
* With M receive antennas the per-antenna stacked vectors are concatenated
  antenna-major: ``[y_ant0; y_ant1; ...]``.
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeMismatchError

PATHLOSS_OFFSET_DB = 128.1
PATHLOSS_SLOPE_DB = 37.6

# Internal vectorization chunk for dataset generation. Part of the
# determinism contract: changing it would change the draw order.
_CHUNK = 1024

_CONSTELLATIONS = {
    "bpsk": np.array([1.0 + 0.0j, -1.0 + 0.0j]),
    "qpsk": np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0),
    "16qam": None,  # built below
}


def _qam16() -> np.ndarray:
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


_CONSTELLATIONS["16qam"] = _qam16()


def pathloss_db(distance_km: np.ndarray | float) -> np.ndarray | float:
    """Distance-based pathloss in dB for a distance in kilometres."""
    return PATHLOSS_OFFSET_DB + PATHLOSS_SLOPE_DB * np.log10(distance_km)


# ---------------------------------------------------------------------------
# Codebook
# ---------------------------------------------------------------------------

@dataclass
class LdsCodebook:
    """Sparse spreading codebook: one unit-norm codeword per device.

    Attributes
    ----------
    n_subcarriers : int
        Number of frequency resources per slot (m).
    n_devices : int
        Total devices in the cell (N).
    n_nonzero : int
        Nonzero entries per codeword (S).
    codewords : np.ndarray
        Complex array of shape (N, m); row i is device i's codeword.
    nonzero_positions : list[np.ndarray]
        Sorted subcarrier indices carrying energy for each device.
    """

    n_subcarriers: int
    n_devices: int
    n_nonzero: int
    codewords: np.ndarray
    nonzero_positions: list = field(repr=False)

    def validate(self) -> None:
        if self.codewords.shape != (self.n_devices, self.n_subcarriers):
            raise ShapeMismatchError(
                f"codeword array is {self.codewords.shape}, expected "
                f"({self.n_devices}, {self.n_subcarriers})"
            )
        for i, pos in enumerate(self.nonzero_positions):
            nz = np.flatnonzero(self.codewords[i])
            if len(nz) != self.n_nonzero or not np.array_equal(nz, np.sort(pos)):
                raise ConfigurationError(f"device {i} violates the sparsity pattern")


def generate_codebook(
    n_subcarriers: int, n_devices: int, n_nonzero: int, rng: np.random.Generator
) -> LdsCodebook:
    """Draw a random sparse codebook with unit-norm codewords.

    Nonzero positions are uniform without replacement per device; nonzero
    values are i.i.d. circularly symmetric complex Gaussian, and each
    codeword is normalized to unit Euclidean norm so per-device transmit
    energy is identical.
    """
    if n_nonzero > n_subcarriers:
        raise ConfigurationError(
            f"codeword weight {n_nonzero} exceeds subcarrier count {n_subcarriers}"
        )
    if n_devices < 1:
        raise ConfigurationError("need at least one device")

    for _ in range(64):
        codewords = np.zeros((n_devices, n_subcarriers), dtype=complex)
        positions = []
        for i in range(n_devices):
            pos = np.sort(rng.choice(n_subcarriers, size=n_nonzero, replace=False))
            vals = (rng.standard_normal(n_nonzero) + 1j * rng.standard_normal(n_nonzero))
            vals /= np.linalg.norm(vals)
            codewords[i, pos] = vals
            positions.append(pos)
        # Preconfigured sequence selection: identical codewords would alias
        # two devices. Continuous draws collide with probability zero, but
        # guard anyway.
        if len({cw.tobytes() for cw in codewords}) == n_devices:
            return LdsCodebook(n_subcarriers, n_devices, n_nonzero, codewords, positions)
    raise ConfigurationError("could not draw distinct codewords")


# ---------------------------------------------------------------------------
# Geometry and channels
# ---------------------------------------------------------------------------

@dataclass
class DeviceGeometry:
    """Per-device distance, pathloss, and linear amplitude scaling.

    ``pathloss_db`` always equals the closed-form law applied to
    ``distances_km``; ``amplitude_scale`` is the linear field attenuation
    ``10**(-pathloss/20)`` for unit transmit power.
    """

    distances_km: np.ndarray
    pathloss_db: np.ndarray
    amplitude_scale: np.ndarray

    @property
    def n_devices(self) -> int:
        return len(self.distances_km)

    @classmethod
    def from_distances(cls, distances_km: np.ndarray) -> "DeviceGeometry":
        distances_km = np.asarray(distances_km, dtype=float)
        if np.any(distances_km <= 0):
            raise ConfigurationError("distances must be positive")
        losses = pathloss_db(distances_km)
        return cls(distances_km, losses, 10.0 ** (-losses / 20.0))


def generate_geometry(
    n_devices: int,
    cell_radius_km: float = 1.0,
    min_distance_km: float = 0.1,
    rng: np.random.Generator | None = None,
    mode: str = "uniform",
) -> DeviceGeometry:
    """Place devices in the cell and evaluate the pathloss law.

    ``mode="uniform"`` draws distances uniformly in
    ``[min_distance_km, cell_radius_km]``. ``mode="normalized"`` puts every
    device at ``cell_radius_km`` so all pathlosses (hence received powers)
    are equal; useful for ablations where near-far spread would mask
    algorithmic differences.
    """
    if not 0 < min_distance_km < cell_radius_km and mode == "uniform":
        raise ConfigurationError(
            f"need 0 < min_distance ({min_distance_km}) < radius ({cell_radius_km})"
        )
    if cell_radius_km <= 0:
        raise ConfigurationError("cell radius must be positive")
    if mode == "uniform":
        if rng is None:
            raise ConfigurationError("uniform geometry needs an rng")
        d = rng.uniform(min_distance_km, cell_radius_km, size=n_devices)
    elif mode == "normalized":
        d = np.full(n_devices, cell_radius_km)
    else:
        raise ConfigurationError(f"unknown geometry mode {mode!r}")
    return DeviceGeometry.from_distances(d)


def generate_channel(
    geometry: DeviceGeometry,
    n_slots: int,
    n_antennas: int,
    rng: np.random.Generator,
    n_subcarriers: int | None = None,
) -> np.ndarray:
    """Draw flat i.i.d. Rayleigh fading coefficients for every device.

    Returns a complex array of shape (N, n_slots, m, n_antennas); each entry
    is zero-mean complex Gaussian with variance ``amplitude_scale[i]**2``,
    independent across subcarriers, slots, and antennas.
    """
    n = geometry.n_devices
    if n_subcarriers is None:
        raise ConfigurationError("n_subcarriers is required")
    shape = (n, n_slots, n_subcarriers, n_antennas)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return h * geometry.amplitude_scale[:, None, None, None]


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass
class AudScenario:
    """One complete active-user-detection setting.

    Bundles the codebook, geometry, dimensioning, and noise policy that
    define a detection problem. ``noise_mode="snr"`` sets the noise variance
    so that the population-average received signal-to-noise ratio equals a
    requested value; ``noise_mode="physical"`` uses a thermal noise floor
    (density x bandwidth) and an explicit transmit power.
    """

    codebook: LdsCodebook
    geometry: DeviceGeometry
    n_active: int
    n_slots: int = 1
    n_antennas: int = 1
    constellation: str = "qpsk"
    train_snr_range_db: tuple = (5.0, 25.0)
    noise_mode: str = "snr"
    tx_power_dbm: float = 0.0
    noise_density_dbm_per_hz: float = -170.0
    bandwidth_hz: float = 1.0e6
    slot_codebooks: list | None = None

    def __post_init__(self) -> None:
        n = self.codebook.n_devices
        if not 1 <= self.n_active < n:
            raise ConfigurationError(
                f"active count {self.n_active} must satisfy 1 <= k < {n}"
            )
        if self.n_slots < 1 or self.n_antennas < 1:
            raise ConfigurationError("slot and antenna counts must be >= 1")
        if self.geometry.n_devices != n:
            raise ConfigurationError("geometry and codebook disagree on device count")
        if self.constellation not in _CONSTELLATIONS:
            raise ConfigurationError(f"unknown constellation {self.constellation!r}")
        if self.slot_codebooks is not None and len(self.slot_codebooks) != self.n_slots:
            raise ConfigurationError("need one codebook per slot when hopping")

    @property
    def n_devices(self) -> int:
        return self.codebook.n_devices

    @property
    def n_subcarriers(self) -> int:
        return self.codebook.n_subcarriers

    @property
    def measurement_dim(self) -> int:
        """Stacked complex measurement length per antenna (m * N_d)."""
        return self.n_subcarriers * self.n_slots

    @property
    def input_dim(self) -> int:
        """Real network-input length: 2 * m * N_d * M."""
        return 2 * self.measurement_dim * self.n_antennas

    @property
    def tx_amplitude(self) -> float:
        """Linear field amplitude of the transmit power (1.0 in snr mode)."""
        if self.noise_mode == "physical":
            return float(np.sqrt(10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)))
        return 1.0

    def slot_codewords(self, slot: int) -> np.ndarray:
        if self.slot_codebooks is not None:
            return self.slot_codebooks[slot].codewords
        return self.codebook.codewords

    def mean_rx_power(self) -> float:
        """Average per-device received power E|h|^2 (includes tx power)."""
        return float(np.mean(self.geometry.amplitude_scale**2)) * self.tx_amplitude**2

    def noise_variance(self, snr_db: float | None = None) -> float:
        """Complex noise variance implied by the noise policy.

        In "snr" mode the variance is chosen so the expected signal energy
        over the instance distribution exceeds the expected noise energy by
        exactly ``snr_db``:  sigma^2 = k * mean(|amp|^2) / (m * 10^(snr/10)).
        """
        if self.noise_mode == "physical":
            noise_dbm = self.noise_density_dbm_per_hz + 10.0 * np.log10(self.bandwidth_hz)
            return float(10.0 ** ((noise_dbm - 30.0) / 10.0))
        if snr_db is None:
            raise ConfigurationError("snr mode needs an explicit snr_db")
        snr_lin = 10.0 ** (snr_db / 10.0)
        return self.n_active * self.mean_rx_power() / (self.n_subcarriers * snr_lin)

    def feature_scale(self, snr_db: float | None = None) -> float:
        """RMS of one real input component, used to standardize inputs.

        Physical received amplitudes can be ~1e-7, far below the batch-norm
        epsilon; training therefore standardizes inputs by this scenario
        constant (deterministic, closed form). Defaults to the midpoint of
        the training SNR range for the noise share.
        """
        if snr_db is None:
            snr_db = 0.5 * (self.train_snr_range_db[0] + self.train_snr_range_db[1])
        sig = self.n_active * self.mean_rx_power() / self.n_subcarriers
        var = 0.5 * (sig + self.noise_variance(snr_db))
        return float(np.sqrt(var))


# ---------------------------------------------------------------------------
# Sensing matrix
# ---------------------------------------------------------------------------

@dataclass
class SensingMatrix:
    """Dense block sensing matrix with per-device block bookkeeping.

    ``matrix`` has shape (m * N_d, N * m * N_d); block i occupies the
    column slice ``[i * block_width, (i+1) * block_width)`` and is
    block-diagonal over slots with diagonal blocks ``diag(c_i^(t))``.
    """

    matrix: np.ndarray
    n_blocks: int
    block_width: int

    @property
    def shape(self):
        return self.matrix.shape

    def block_slice(self, i: int) -> slice:
        return slice(i * self.block_width, (i + 1) * self.block_width)

    def block(self, i: int) -> np.ndarray:
        return self.matrix[:, self.block_slice(i)]

    def nonzero_columns(self, i: int) -> np.ndarray:
        """Structurally nonzero column offsets within block i."""
        return np.flatnonzero(np.any(self.block(i) != 0, axis=0))


def build_sensing_matrix(
    codebook: LdsCodebook,
    n_slots: int,
    slot_codebooks: list | None = None,
) -> SensingMatrix:
    """Assemble the stacked sensing matrix from a codebook.

    Each device block stacks ``diag(c_i^(t))`` block-diagonally over the
    N_d slots, which makes ``y = Phi @ x`` hold exactly for the slot-major
    stacking used everywhere in this package. Codeword hopping is enabled
    by passing one codebook per slot.
    """
    m = codebook.n_subcarriers
    n = codebook.n_devices
    width = m * n_slots
    phi = np.zeros((width, n * width), dtype=complex)
    idx = np.arange(m)
    for t in range(n_slots):
        cw = slot_codebooks[t].codewords if slot_codebooks is not None else codebook.codewords
        for i in range(n):
            phi[t * m + idx, i * width + t * m + idx] = cw[i]
    return SensingMatrix(phi, n, width)


def scenario_sensing_matrix(scenario: AudScenario) -> SensingMatrix:
    return build_sensing_matrix(scenario.codebook, scenario.n_slots, scenario.slot_codebooks)


# ---------------------------------------------------------------------------
# Real/complex layout
# ---------------------------------------------------------------------------

def real_split(y: np.ndarray) -> np.ndarray:
    """Split a complex vector (or batch) into [all real parts, all imag parts]."""
    y = np.asarray(y)
    return np.concatenate([y.real, y.imag], axis=-1)


def recombine(features: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_split`."""
    features = np.asarray(features)
    d = features.shape[-1]
    if d % 2:
        raise ShapeMismatchError("real-split vectors have even length")
    half = d // 2
    return features[..., :half] + 1j * features[..., half:]


# ---------------------------------------------------------------------------
# Instance synthesis
# ---------------------------------------------------------------------------

@dataclass
class AudInstance:
    """One synthetic detection trial with full generative detail retained.

    ``y_stacked`` is the flat received vector of length m*N_d*M
    (antenna-major). ``x_blocks`` holds the composite symbol-times-channel
    vector of each active device, shape (k, m*N_d, M).
    """

    y_stacked: np.ndarray
    support: tuple
    x_blocks: np.ndarray
    channels: np.ndarray        # (k, N_d, m, M)
    symbols: np.ndarray         # (k, N_d)
    activity: np.ndarray        # (N,) 0/1
    noise: np.ndarray           # (m*N_d, M)
    noise_variance: float
    snr_db: float | None
    n_slots: int
    n_antennas: int

    @property
    def n_active(self) -> int:
        return len(self.support)

    @property
    def y_matrix(self) -> np.ndarray:
        """Received vector reshaped to (m*N_d, M)."""
        m_dim = self.y_stacked.size // self.n_antennas
        return self.y_stacked.reshape(self.n_antennas, m_dim).T

    def full_sparse_vector(self, n_devices: int) -> np.ndarray:
        """Scatter the active blocks into the length-(N*m*N_d) sparse vector."""
        width = self.x_blocks.shape[1]
        x = np.zeros((n_devices * width, self.n_antennas), dtype=complex)
        for j, dev in enumerate(self.support):
            x[dev * width: (dev + 1) * width] = self.x_blocks[j]
        return x


@dataclass
class SampleBatch:
    """A vectorized batch of synthetic trials (lean arrays, no per-trial detail)."""

    y: np.ndarray               # (count, m*N_d, M) complex
    supports: np.ndarray        # (count, k) sorted device indices
    snr_db: np.ndarray          # (count,)
    noise_variance: np.ndarray  # (count,)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def features(self) -> np.ndarray:
        """Real-split network inputs, shape (count, 2*m*N_d*M)."""
        count, dim, m_ant = self.y.shape
        flat = self.y.transpose(0, 2, 1).reshape(count, dim * m_ant)
        return real_split(flat)


def _draw_supports(count: int, n_devices: int, k: int, rng: np.random.Generator) -> np.ndarray:
    order = np.argsort(rng.random((count, n_devices)), axis=1)
    return np.sort(order[:, :k], axis=1)


def _draw_batch(
    scenario: AudScenario,
    count: int,
    rng: np.random.Generator,
    snr_db: float | None,
) -> tuple:
    """Vectorized draw of ``count`` instances; returns all generative pieces."""
    m = scenario.n_subcarriers
    k = scenario.n_active
    n_d = scenario.n_slots
    m_ant = scenario.n_antennas
    points = _CONSTELLATIONS[scenario.constellation]

    supports = _draw_supports(count, scenario.n_devices, k, rng)
    symbols = points[rng.integers(0, len(points), size=(count, k, n_d))]
    amps = scenario.geometry.amplitude_scale[supports] * scenario.tx_amplitude
    shape = (count, k, n_d, m, m_ant)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    h *= amps[:, :, None, None, None]

    if scenario.noise_mode == "physical":
        snrs = np.full(count, np.nan)
        sigma2 = np.full(count, scenario.noise_variance())
    elif snr_db is not None:
        snrs = np.full(count, float(snr_db))
        sigma2 = np.full(count, scenario.noise_variance(snr_db))
    else:
        lo, hi = scenario.train_snr_range_db
        snrs = rng.uniform(lo, hi, size=count)
        sigma2 = scenario.n_active * scenario.mean_rx_power() / (
            scenario.n_subcarriers * 10.0 ** (snrs / 10.0)
        )

    noise = (
        rng.standard_normal((count, m * n_d, m_ant))
        + 1j * rng.standard_normal((count, m * n_d, m_ant))
    ) * np.sqrt(sigma2 / 2.0)[:, None, None]

    y = noise.copy()
    for t in range(n_d):
        cw = scenario.slot_codewords(t)[supports]            # (count, k, m)
        contrib = cw[:, :, :, None] * h[:, :, t] * symbols[:, :, t, None, None]
        y[:, t * m: (t + 1) * m, :] += contrib.sum(axis=1)
    return y, supports, symbols, h, noise, snrs, sigma2


def synthesize_batch(
    scenario: AudScenario,
    count: int,
    rng: np.random.Generator,
    snr_db: float | None = None,
) -> SampleBatch:
    """Draw a batch of trials at a fixed SNR (or the training range if None)."""
    y, supports, _, _, _, snrs, sigma2 = _draw_batch(scenario, count, rng, snr_db)
    return SampleBatch(y, supports, snrs, sigma2)


def synthesize_received(
    scenario: AudScenario,
    rng: np.random.Generator,
    snr_db: float | None = None,
) -> AudInstance:
    """Draw a single fully-detailed trial."""
    y, supports, symbols, h, noise, snrs, sigma2 = _draw_batch(scenario, 1, rng, snr_db)
    support = tuple(int(i) for i in supports[0])
    n_d, m = scenario.n_slots, scenario.n_subcarriers
    # composite per-device block: concat over slots of s^(t) * h^(t)
    x_blocks = (symbols[0][:, :, None, None] * h[0]).reshape(
        scenario.n_active, n_d * m, scenario.n_antennas
    )
    activity = np.zeros(scenario.n_devices, dtype=int)
    activity[list(support)] = 1
    y_flat = y[0].T.reshape(-1)
    return AudInstance(
        y_stacked=y_flat,
        support=support,
        x_blocks=x_blocks,
        channels=h[0],
        symbols=symbols[0],
        activity=activity,
        noise=noise[0],
        noise_variance=float(sigma2[0]),
        snr_db=None if np.isnan(snrs[0]) else float(snrs[0]),
        n_slots=n_d,
        n_antennas=scenario.n_antennas,
    )


def generate_dataset(
    scenario: AudScenario,
    count: int,
    rng: np.random.Generator,
    snr_db: float | None = None,
):
    """Stream ``count`` training samples as (features, support, k) tuples.

    Samples are generated in fixed-size vectorized chunks; the stream is a
    deterministic function of the generator state, so the same seed always
    reproduces the same samples. Per-sample SNR is drawn from the
    scenario's training range unless ``snr_db`` pins it.
    """
    if count < 0:
        raise ConfigurationError("count must be non-negative")
    remaining = count
    while remaining > 0:
        chunk = min(_CHUNK, remaining)
        batch = synthesize_batch(scenario, chunk, rng, snr_db)
        feats = batch.features
        for i in range(chunk):
            yield feats[i], batch.supports[i].copy(), scenario.n_active
        remaining -= chunk


def generate_dataset_arrays(
    scenario: AudScenario,
    count: int,
    rng: np.random.Generator,
    snr_db: float | None = None,
) -> tuple:
    """Materialize :func:`generate_dataset` into (features, supports) arrays."""
    feats = np.empty((count, scenario.input_dim))
    supports = np.empty((count, scenario.n_active), dtype=int)
    for i, (f, s, _) in enumerate(generate_dataset(scenario, count, rng, snr_db)):
        feats[i] = f
        supports[i] = s
    return feats, supports


# ---------------------------------------------------------------------------
# Mutual coherence
# ---------------------------------------------------------------------------

def mutual_coherence(phi: np.ndarray | SensingMatrix, chunk: int = 2048) -> float:
    """Largest normalized inner product between distinct columns.

    All-zero columns (structural zeros of LDS blocks) are skipped with a
    warning. Evaluated in column chunks so wide matrices stay in memory.
    """
    a = phi.matrix if isinstance(phi, SensingMatrix) else np.asarray(phi)
    if a.ndim != 2:
        raise ShapeMismatchError("expected a matrix")
    norms = np.linalg.norm(a, axis=0)
    keep = norms > 0
    if np.count_nonzero(~keep):
        warnings.warn(f"skipping {np.count_nonzero(~keep)} all-zero columns")
    cols = a[:, keep] / norms[keep]
    n = cols.shape[1]
    if n < 2:
        raise ConfigurationError("need at least two nonzero columns")
    best = 0.0
    for start in range(0, n, chunk):
        block = cols[:, start: start + chunk]
        g = np.abs(block.conj().T @ cols)
        for r in range(block.shape[1]):
            g[r, start + r] = 0.0
        best = max(best, float(g.max()))
    return min(best, 1.0)


# ---------------------------------------------------------------------------
# Dataset file format
# ---------------------------------------------------------------------------

_MAGIC = b"GFNA"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")  # magic, version, N, m, N_d, M, k


def write_dataset(
    path,
    features: np.ndarray,
    supports: np.ndarray,
    *,
    n_devices: int,
    n_subcarriers: int,
    n_slots: int,
    n_antennas: int,
) -> None:
    """Write samples as the record-oriented binary dataset format.

    Layout: magic "GFNA", format version, then a fixed header (N, m, N_d,
    M, k); each record stores the real-split input vector followed by the
    one-hot support row, both little-endian binary32.
    """
    features = np.asarray(features, dtype="<f4")
    supports = np.asarray(supports, dtype=int)
    if features.ndim != 2 or supports.ndim != 2 or len(features) != len(supports):
        raise ShapeMismatchError("features and supports must be parallel 2-d arrays")
    k = supports.shape[1]
    expected = 2 * n_subcarriers * n_slots * n_antennas
    if features.shape[1] != expected:
        raise ShapeMismatchError(
            f"feature length {features.shape[1]} != 2*m*N_d*M = {expected}"
        )
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n_devices, n_subcarriers,
                              n_slots, n_antennas, k))
        onehot = np.zeros((len(features), n_devices), dtype="<f4")
        rows = np.repeat(np.arange(len(features)), k)
        onehot[rows, supports.ravel()] = 1.0
        interleaved = np.concatenate([features, onehot], axis=1)
        fh.write(interleaved.tobytes())


def read_dataset(path) -> dict:
    """Read a dataset file; returns features, supports, and the header fields."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise ConfigurationError(f"{path} is not a GFNA dataset")
    magic, version, n, m, n_d, m_ant, k = _HEADER.unpack_from(raw)
    if version != _VERSION:
        raise ConfigurationError(f"unsupported dataset version {version}")
    feat_len = 2 * m * n_d * m_ant
    rec = feat_len + n
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size % rec:
        raise ConfigurationError("truncated dataset record")
    body = body.reshape(-1, rec)
    features = body[:, :feat_len].astype(np.float64)
    supports = np.argsort(-body[:, feat_len:], axis=1, kind="stable")[:, :k]
    return {
        "features": features,
        "supports": np.sort(supports, axis=1),
        "n_devices": n,
        "n_subcarriers": m,
        "n_slots": n_d,
        "n_antennas": m_ant,
        "n_active": k,
    }
