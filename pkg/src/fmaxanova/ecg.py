"""ECG spectral features: 12-lead ECG to adaptive ECG waveform and its spectra.

Pipeline per subject:

1. 12 leads -> 3-D vectorcardiogram (inverse Dower transform on I, II, V1-V6).
2. R-peaks on the VCG (Pan-Tompkins style detector).
3. Beats ``[peak_l, peak_{l+1})`` resampled to 500 samples with a natural
   cubic spline.
4. Each beat projected on its R-peak direction (first column), normalized to
   unit L2 norm, and averaged over beats -> adaptive ECG waveform ``s``.
5. ``power = |DFT(s)|^2`` and the cumulative positive-frequency power.

The per-subject features are assembled into a :class:`FunctionalSample`
with :func:`build_group_samples`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline

from .funcdata import FunctionalSample, Grid

__all__ = [
    "EcgError",
    "LEAD_NAMES",
    "INVERSE_DOWER",
    "FORWARD_DOWER",
    "EcgRecording",
    "VcgRecording",
    "BeatSet",
    "AdaptiveWaveform",
    "DetectorConfig",
    "leads_to_vcg",
    "vcg_to_leads",
    "lowpass",
    "detect_r_peaks",
    "extract_beats",
    "resample_beat",
    "adaptive_waveform",
    "spectra",
    "process_recording",
    "build_group_samples",
    "read_recording_csv",
    "synthetic_vcg",
    "BeatShape",
]

BEAT_LENGTH = 500
N_POSITIVE = BEAT_LENGTH // 2
FEATURES = ("waveform", "power", "cumulative")

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")
# independent leads used by the transform, as indices into LEAD_NAMES
_INDEPENDENT = (0, 1, 6, 7, 8, 9, 10, 11)

# Inverse Dower matrix (Edenbrandt & Pahlm 1988); columns I, II, V1..V6, rows X, Y, Z.
INVERSE_DOWER = np.array(
    [
        [0.156, -0.010, -0.172, -0.074, 0.122, 0.231, 0.239, 0.194],
        [-0.227, 0.887, 0.057, -0.019, -0.106, -0.022, 0.041, 0.048],
        [0.022, 0.102, -0.229, -0.310, -0.246, -0.063, 0.055, 0.108],
    ]
)
# Dower matrix (Dower 1980); rows I, II, V1..V6, columns X, Y, Z.
FORWARD_DOWER = np.array(
    [
        [0.632, -0.235, 0.059],
        [0.235, 1.066, -0.132],
        [-0.515, 0.157, -0.917],
        [0.044, 0.164, -1.387],
        [0.882, 0.098, -1.277],
        [1.213, 0.127, -0.601],
        [1.125, 0.127, -0.086],
        [0.831, 0.076, 0.230],
    ]
)


class EcgError(ValueError):
    """Raised when a recording cannot be processed."""


@dataclass(frozen=True)
class EcgRecording:
    leads: np.ndarray  # (L_ch, N) millivolts
    fs: float = 500.0
    subject_id: str = ""

    def __post_init__(self):
        leads = np.atleast_2d(np.asarray(self.leads, dtype=float))
        if leads.shape[0] not in (3, 12):
            raise EcgError(f"expected 3 or 12 channels, got {leads.shape[0]}")
        if not self.fs > 0:
            raise EcgError("sampling rate must be positive")
        if leads.shape[1] < 2 * self.fs:
            raise EcgError("recording must be at least 2 seconds long")
        if not np.all(np.isfinite(leads)):
            raise EcgError("recording contains non-finite values")
        object.__setattr__(self, "leads", leads)


@dataclass(frozen=True)
class VcgRecording:
    xyz: np.ndarray  # (3, N)
    fs: float = 500.0
    subject_id: str = ""

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=float)
        if xyz.ndim != 2 or xyz.shape[0] != 3:
            raise EcgError("VCG must have shape (3, N)")
        if not np.all(np.isfinite(xyz)):
            raise EcgError("VCG contains non-finite values")
        object.__setattr__(self, "xyz", xyz)

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xyz**2, axis=0))


@dataclass(frozen=True)
class BeatSet:
    beats: tuple  # of (3, 500) arrays
    r_peak_indices: tuple
    fs: float = 500.0

    def __post_init__(self):
        for b in self.beats:
            if np.shape(b) != (3, BEAT_LENGTH):
                raise EcgError(f"beats must have shape (3, {BEAT_LENGTH})")
        peaks = np.asarray(self.r_peak_indices)
        if peaks.size > 1 and np.any(np.diff(peaks) < math.floor(self.fs * 60 / 220)):
            raise EcgError("R-peaks closer than the 220 bpm limit")


@dataclass(frozen=True)
class AdaptiveWaveform:
    s: np.ndarray  # (500,)
    power: np.ndarray  # (500,)
    cumulative: np.ndarray  # (250,)
    subject_id: str = ""
    n_beats: int = 0

    def feature(self, name: str) -> np.ndarray:
        if name == "waveform":
            return self.s
        if name == "power":
            return self.power[1 : N_POSITIVE + 1]
        if name == "cumulative":
            return self.cumulative
        raise ValueError(f"unknown feature {name!r}; expected one of {FEATURES}")

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "n_beats": self.n_beats,
            "s": self.s.tolist(),
            "power": self.power.tolist(),
            "cumulative": self.cumulative.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# lead transforms


def leads_to_vcg(rec: EcgRecording) -> VcgRecording:
    """Recover the VCG from 12 leads; 3-channel input is taken as XYZ already."""
    if rec.leads.shape[0] == 3:
        return VcgRecording(rec.leads.copy(), rec.fs, rec.subject_id)
    if rec.leads.shape[0] != 12:
        raise EcgError("channel count must be 3 or 12")
    xyz = INVERSE_DOWER @ rec.leads[list(_INDEPENDENT)]
    return VcgRecording(xyz, rec.fs, rec.subject_id)


def vcg_to_leads(v: VcgRecording) -> EcgRecording:
    """Synthesize a 12-lead ECG from a VCG with the Dower matrix."""
    eight = FORWARD_DOWER @ v.xyz
    lead_i, lead_ii = eight[0], eight[1]
    limb = np.stack(
        [
            lead_i,
            lead_ii,
            lead_ii - lead_i,
            -(lead_i + lead_ii) / 2,
            lead_i - lead_ii / 2,
            lead_ii - lead_i / 2,
        ]
    )
    return EcgRecording(np.vstack([limb, eight[2:]]), v.fs, v.subject_id)


def lowpass(rec, cutoff: float = 60.0):
    """Second-order Butterworth low-pass (-3 dB at ``cutoff``), applied causally.

    Accepts an :class:`EcgRecording` or :class:`VcgRecording` and returns the
    same type.
    """
    sos = signal.butter(2, cutoff, btype="low", fs=rec.fs, output="sos")
    if isinstance(rec, EcgRecording):
        return EcgRecording(signal.sosfilt(sos, rec.leads, axis=1), rec.fs, rec.subject_id)
    return VcgRecording(signal.sosfilt(sos, rec.xyz, axis=1), rec.fs, rec.subject_id)


# ---------------------------------------------------------------------------
# R-peak detection


@dataclass(frozen=True)
class DetectorConfig:
    band: tuple = (5.0, 15.0)
    integration_window: float = 0.150
    refractory: float = 0.27
    min_heart_rate: float = 40.0
    max_heart_rate: float = 220.0
    refine_window: float = 0.08


def _qrs_energy(v: VcgRecording, cfg: DetectorConfig) -> np.ndarray:
    sos = signal.butter(2, cfg.band, btype="band", fs=v.fs, output="sos")
    # offset removal keeps a flatline exactly zero through the filter
    filt = signal.sosfiltfilt(sos, v.xyz - v.xyz[:, :1], axis=1)
    # five-point derivative, squared and summed over the three axes
    kernel = np.array([1.0, 2.0, 0.0, -2.0, -1.0]) * (v.fs / 8.0)
    deriv = np.stack([np.convolve(ch, kernel, mode="same") for ch in filt])
    energy = np.sum(deriv**2, axis=0)
    width = max(1, int(round(cfg.integration_window * v.fs)))
    return np.convolve(energy, np.ones(width) / width, mode="same")


def detect_r_peaks(v: VcgRecording, cfg: DetectorConfig | None = None) -> np.ndarray:
    """R-peak sample indices on the VCG.

    Band-pass, derivative, squaring and moving-window integration produce a
    QRS energy envelope.  Candidate peaks (separated by the refractory
    period) are classified with the adaptive signal/noise thresholds of
    Pan & Tompkins; if no beat is found for longer than the 40 bpm interval
    (or 1.66 mean RR) the largest skipped candidate above half threshold is
    recovered.  Each detection is moved to the maximum of the VCG magnitude
    nearby.
    """
    cfg = cfg or DetectorConfig()
    fs = v.fs
    mwi = _qrs_energy(v, cfg)
    if not np.max(mwi) > 0:
        raise EcgError("fewer than 2 peaks found")
    min_gap = int(math.ceil(fs * max(cfg.refractory, 60.0 / cfg.max_heart_rate)))
    cand, _ = signal.find_peaks(mwi, distance=min_gap)
    if cand.size < 2:
        raise EcgError("fewer than 2 peaks found")

    head = mwi[: int(2 * fs)]
    spki = 0.25 * float(np.max(head))
    npki = 0.5 * float(np.mean(head))
    max_rr = 60.0 / cfg.min_heart_rate * fs
    accepted: list = []
    skipped: list = []
    for c in cand:
        thr = npki + 0.25 * (spki - npki)
        amp = mwi[c]
        if amp > thr and (not accepted or c - accepted[-1] >= min_gap):
            if accepted and skipped:
                rr = np.diff(accepted[-8:]) if len(accepted) > 1 else np.array([max_rr])
                limit = min(max_rr, 1.66 * float(np.mean(rr)))
                if c - accepted[-1] > limit:
                    best = max(skipped, key=lambda j: mwi[j])
                    if mwi[best] > 0.5 * thr and best - accepted[-1] >= min_gap and c - best >= min_gap:
                        accepted.append(best)
                        spki = 0.25 * mwi[best] + 0.75 * spki
            accepted.append(int(c))
            skipped = []
            spki = 0.125 * amp + 0.875 * spki
        else:
            skipped.append(int(c))
            npki = 0.125 * amp + 0.875 * npki

    mag = v.magnitude
    half = int(round(cfg.refine_window * fs))
    refined = []
    for c in accepted:
        lo, hi = max(0, c - half), min(mag.size, c + half + 1)
        refined.append(lo + int(np.argmax(mag[lo:hi])))
    peaks = np.unique(refined)
    if peaks.size > 1:
        keep = [peaks[0]]
        for p in peaks[1:]:
            if p - keep[-1] >= min_gap:
                keep.append(p)
        peaks = np.array(keep)
    if peaks.size < 2:
        raise EcgError("fewer than 2 peaks found")
    return peaks


# ---------------------------------------------------------------------------
# beats and features


def resample_beat(beat: np.ndarray, length: int = BEAT_LENGTH) -> np.ndarray:
    """Natural cubic spline resampling of each row to ``length`` points.

    Sample ``j`` of the input sits at position ``j``; output points are
    equispaced over ``[0, len - 1]`` so the first and last samples are kept.
    """
    beat = np.atleast_2d(np.asarray(beat, dtype=float))
    m = beat.shape[1]
    if m < 2:
        raise EcgError("a beat needs at least 2 samples")
    x = np.arange(m, dtype=float)
    xs = np.linspace(0.0, m - 1.0, length)
    if m == length:
        return beat.copy()
    return CubicSpline(x, beat, axis=1, bc_type="natural")(xs)


def extract_beats(v: VcgRecording, peaks, L: int | None = None) -> BeatSet:
    """Cut the VCG into beats between consecutive R-peaks and resample them.

    ``L`` defaults to every complete beat in the recording.
    """
    peaks = np.asarray(peaks, dtype=int)
    available = peaks.size - 1
    if L is None:
        L = available
    if L < 1 or available < L:
        raise EcgError(f"need at least {L + 1} R-peaks, found {peaks.size}")
    beats = tuple(resample_beat(v.xyz[:, peaks[l] : peaks[l + 1]]) for l in range(L))
    return BeatSet(beats, tuple(int(p) for p in peaks[: L + 1]), v.fs)


def spectra(s: np.ndarray) -> tuple:
    """``(power, cumulative)``: ``|DFT(s)|^2`` and running sums over bins 2..251."""
    power = np.abs(np.fft.fft(s)) ** 2
    cumulative = np.cumsum(power[1 : N_POSITIVE + 1])
    return power, cumulative


def adaptive_waveform(beats: BeatSet, subject_id: str = "") -> AdaptiveWaveform:
    """Average of the unit-norm adaptive lead signals, with its spectra."""
    if not beats.beats:
        raise EcgError("empty beat set")
    acc = np.zeros(BEAT_LENGTH)
    for b in beats.beats:
        direction = b[:, 0]
        if not np.linalg.norm(direction) > 0:
            raise EcgError("zero R-peak direction")
        s0 = direction @ b
        norm = np.linalg.norm(s0)
        if not norm > 0:
            raise EcgError("adaptive lead signal has zero norm")
        acc += s0 / norm
    s = acc / len(beats.beats)
    power, cumulative = spectra(s)
    return AdaptiveWaveform(s, power, cumulative, subject_id, len(beats.beats))


def process_recording(
    rec,
    L: int | None = None,
    detector: DetectorConfig | None = None,
    apply_lowpass: bool = False,
) -> AdaptiveWaveform:
    """Run the full pipeline on an :class:`EcgRecording` or :class:`VcgRecording`."""
    if apply_lowpass:
        rec = lowpass(rec)
    v = leads_to_vcg(rec) if isinstance(rec, EcgRecording) else rec
    peaks = detect_r_peaks(v, detector)
    return adaptive_waveform(extract_beats(v, peaks, L), v.subject_id)


def feature_grid(feature: str) -> Grid:
    if feature == "waveform":
        return Grid(np.arange(BEAT_LENGTH) / (BEAT_LENGTH - 1))
    if feature in ("power", "cumulative"):
        return Grid(np.arange(1, N_POSITIVE + 1, dtype=float))
    raise ValueError(f"unknown feature {feature!r}; expected one of {FEATURES}")


def build_group_samples(waveforms, feature: str = "waveform") -> FunctionalSample:
    """Assemble per-subject features into a sample; subjects are the replicates.

    ``waveforms`` is an iterable of ``(AdaptiveWaveform, group_label)``.
    """
    grid = feature_grid(feature)
    order: list = []
    buckets: dict = {}
    for wf, label in waveforms:
        vec = wf.feature(feature)
        if vec.size != grid.M:
            raise EcgError(f"mixed feature lengths: expected {grid.M}, got {vec.size}")
        if label not in buckets:
            order.append(label)
            buckets[label] = []
        buckets[label].append(vec)
    return FunctionalSample(grid, tuple(order), tuple(np.array(buckets[g]) for g in order))


# ---------------------------------------------------------------------------
# file input


def read_recording_csv(path, fs: float = 500.0, subject_id: str | None = None):
    """Read a recording CSV (one column per lead, one row per sample).

    A non-numeric first row is treated as a header.  Twelve columns are
    taken in the order I, II, III, aVR, aVL, aVF, V1-V6 and give an
    :class:`EcgRecording`; three columns are read as X, Y, Z and give a
    :class:`VcgRecording`.
    """
    path = Path(path)
    sid = path.stem if subject_id is None else subject_id
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise EcgError(f"{path}: empty recording")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise EcgError(f"{path}: {exc}") from None
    if data.ndim != 2:
        raise EcgError(f"{path}: ragged rows")
    if data.shape[1] == 3:
        v = VcgRecording(data.T, fs, sid)
        if v.xyz.shape[1] < 2 * fs:
            raise EcgError("recording must be at least 2 seconds long")
        return v
    return EcgRecording(data.T, fs, sid)


# ---------------------------------------------------------------------------
# synthetic signals


@dataclass(frozen=True)
class BeatShape:
    """Gaussian-wave beat model in VCG space.

    Each wave has a centre offset from the R-peak (s), a width (s), an
    amplitude (mV) and a unit 3-D direction.
    """

    offsets: tuple = (-0.20, -0.03, 0.0, 0.03, 0.28)
    widths: tuple = (0.025, 0.010, 0.012, 0.010, 0.045)
    amplitudes: tuple = (0.15, -0.15, 1.2, -0.25, 0.3)
    directions: tuple = field(
        default=(
            (0.6, 0.7, 0.3),
            (0.5, 0.8, -0.3),
            (0.7, 0.6, -0.4),
            (0.2, 0.9, 0.4),
            (0.6, 0.5, -0.6),
        )
    )

    def scaled(self, width_factor: float) -> "BeatShape":
        return BeatShape(
            self.offsets,
            tuple(w * width_factor for w in self.widths),
            self.amplitudes,
            self.directions,
        )


def synthetic_vcg(
    duration: float = 10.0,
    fs: float = 500.0,
    heart_rate: float = 60.0,
    rr_jitter: float = 0.0,
    shape: BeatShape | None = None,
    noise_std: float = 0.0,
    rng=None,
    subject_id: str = "synthetic",
) -> tuple:
    """A VCG made of Gaussian P-QRS-T waves placed at known R-peak samples.

    The first R-peak sits one RR interval after the start.  Returns
    ``(VcgRecording, r_peak_indices)``.
    """
    shape = shape or BeatShape()
    rng = np.random.default_rng(0) if rng is None else rng
    n = int(round(duration * fs))
    rr = 60.0 / heart_rate * fs
    peaks = []
    pos = rr
    while pos < n - 1:
        peaks.append(int(round(pos)))
        step = rr * (1.0 + rr_jitter * rng.standard_normal()) if rr_jitter else rr
        pos += max(step, 0.3 * fs)
    t = np.arange(n) / fs
    xyz = np.zeros((3, n))
    dirs = np.array(shape.directions, dtype=float)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for p in peaks:
        tp = p / fs
        for off, wid, amp, d in zip(shape.offsets, shape.widths, shape.amplitudes, dirs):
            centre = tp + off
            lo = max(0, int((centre - 5 * wid) * fs))
            hi = min(n, int((centre + 5 * wid) * fs) + 2)
            if lo >= hi:
                continue
            g = amp * np.exp(-0.5 * ((t[lo:hi] - centre) / wid) ** 2)
            xyz[:, lo:hi] += d[:, None] * g[None, :]
    if noise_std:
        xyz = xyz + noise_std * rng.standard_normal(xyz.shape)
    return VcgRecording(xyz, fs, subject_id), np.array(peaks)
