"""
Profile Decomposition
Greedy translate-and-extract decomposition of sequences in l2(Z^2, R^d): finitely many
diverging translates of fixed profiles plus a residual with small sup-norm
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import NonConvergentTailError, SchemaError, ValidationError

logger = logging.getLogger(__name__)

SEQUENCE_SCHEMA = "lattice-sequence/1.0"
RESULT_SCHEMA = "decomposition/1.0"
CAUCHY_FRACTION = 0.1

Site = Tuple[int, int]
Entry = Dict[Site, np.ndarray]


def _site(j: Sequence[int]) -> Site:
    if len(j) != 2:
        raise ValidationError(f"lattice sites are pairs of integers, got {j!r}")
    return (int(j[0]), int(j[1]))


def translate(entry: Entry, w: Sequence[int]) -> Entry:
    """(T_w x)_j = x_{j-w}: every site moves by +w"""
    w0, w1 = _site(w)
    return {(j0 + w0, j1 + w1): v for (j0, j1), v in entry.items()}


def lattice_norm(entry: Entry) -> float:
    """l2 norm sqrt(sum_j |x_j|^2)"""
    return math.sqrt(sum(float(np.dot(v, v)) for v in entry.values()))


def sup_norm(entry: Entry) -> float:
    """l-infinity norm max_j |x_j|"""
    return max((float(np.linalg.norm(v)) for v in entry.values()), default=0.0)


def _subtract(entry: Entry, other: Entry) -> Entry:
    out = dict(entry)
    for j, v in other.items():
        value = out[j] - v if j in out else -v
        if np.any(value != 0):
            out[j] = value
        else:
            out.pop(j, None)
    return out


def _argmax_site(entry: Entry) -> Optional[Site]:
    """Site of largest |x_j|; ties go to the lexicographically smallest site"""
    best, best_norm = None, -1.0
    for j in sorted(entry):
        norm = float(np.linalg.norm(entry[j]))
        if norm > best_norm:
            best, best_norm = j, norm
    return best


@dataclass
class LatticeSequence:
    """x_1 .. x_N, each a finitely supported map Z^2 -> R^d"""
    entries: List[Entry]
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"fiber dimension must be >= 1, got {self.d}")
        cleaned = []
        for n, entry in enumerate(self.entries):
            sites = {}
            for j, v in entry.items():
                vec = np.asarray(v, dtype=float).reshape(-1)
                if vec.shape != (self.d,):
                    raise ValidationError(f"entry {n} site {j}: vector of length {vec.size}, expected {self.d}")
                if not np.all(np.isfinite(vec)):
                    raise ValidationError(f"entry {n} site {j}: non-finite value")
                sites[_site(j)] = vec
            cleaned.append(sites)
        self.entries = cleaned

    @property
    def N(self) -> int:
        return len(self.entries)

    def norms(self) -> List[float]:
        return [lattice_norm(e) for e in self.entries]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": SEQUENCE_SCHEMA,
            "d": self.d,
            "N": self.N,
            "entries": [_entry_to_list(e) for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LatticeSequence":
        schema = data.get("schema")
        if schema is None or schema.split("/")[0] != SEQUENCE_SCHEMA.split("/")[0]:
            raise SchemaError(f"expected a {SEQUENCE_SCHEMA} document, got schema {schema!r}")
        if "entries" not in data or "d" not in data:
            raise SchemaError("sequence document needs 'd' and 'entries'")
        entries = [_entry_from_list(items) for items in data["entries"]]
        return cls(entries=entries, d=int(data["d"]))


def _entry_to_list(entry: Entry) -> List[Dict[str, Any]]:
    return [{"site": list(j), "value": [float(x) for x in entry[j]]} for j in sorted(entry)]


def _entry_from_list(items: List[Dict[str, Any]]) -> Entry:
    try:
        return {_site(item["site"]): np.asarray(item["value"], dtype=float) for item in items}
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed site record: {e}") from e


def translate_sequence(seq: LatticeSequence, w: Sequence[int]) -> LatticeSequence:
    return LatticeSequence([translate(e, w) for e in seq.entries], seq.d)


@dataclass
class DecompositionResult:
    profiles: List[Entry]
    tracks: List[List[Site]]
    residual: List[Entry]
    residual_sup: float
    norm_gap: float
    min_track_distance: float
    tail_start: int
    eps_cc: float
    converged: bool = True
    notes: List[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.profiles)

    def tracks_frame(self) -> pd.DataFrame:
        """One row per (profile, n): profile, n, w0, w1 (n counts from 1)"""
        rows = [{"profile": l + 1, "n": n + 1, "w0": w[0], "w1": w[1]}
                for l, track in enumerate(self.tracks) for n, w in enumerate(track)]
        return pd.DataFrame(rows, columns=["profile", "n", "w0", "w1"])

    def summary(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "residual_sup": self.residual_sup,
            "norm_gap": self.norm_gap,
            "min_track_distance": (self.min_track_distance
                                   if math.isfinite(self.min_track_distance) else None),
            "tail_start": self.tail_start + 1,
            "eps_cc": self.eps_cc,
            "converged": self.converged,
            "profile_norms": [lattice_norm(p) for p in self.profiles],
            "notes": list(self.notes),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": RESULT_SCHEMA,
            "summary": self.summary(),
            "profiles": [_entry_to_list(p) for p in self.profiles],
            "tracks": [[list(w) for w in track] for track in self.tracks],
        }


def _tail_profile(recentred: List[Entry], d: int) -> Entry:
    """
    Componentwise average over the tail, taken as the median; sites absent at some n
    count as zero there. On a noiseless tail every entry at a site is equal, so median
    and mean agree; a site visited once by escaping mass keeps a zero median
    """
    sites = sorted(set().union(*[e.keys() for e in recentred]))
    profile = {}
    zero = np.zeros(d)
    for j in sites:
        stack = np.stack([e.get(j, zero) for e in recentred])
        value = np.median(stack, axis=0)
        if np.any(value != 0):
            profile[j] = value
    return profile


def _cauchy_defect(recentred: List[Entry], profile: Entry) -> float:
    """Largest tail deviation from the profile on the profile's support"""
    worst = 0.0
    for j, v in profile.items():
        for e in recentred:
            worst = max(worst, float(np.linalg.norm(e.get(j, 0.0) - v)))
    return worst


def _min_distance(tracks: List[List[Site]]) -> float:
    if len(tracks) < 2:
        return float("inf")
    last = [np.asarray(t[-1], dtype=float) for t in tracks]
    return min(float(np.linalg.norm(a - b)) for i, a in enumerate(last) for b in last[i + 1:])


def decompose(seq: LatticeSequence, eps_cc: float, tail_fraction: float = 0.5,
              strict: bool = True) -> DecompositionResult:
    """
    Extract profiles until the recentred residual is below eps_cc on the tail

    Each round picks w_n = argmax_j |r_{n,j}|, takes the componentwise tail median of
    T_{-w_n} r_n as the profile, checks that the tail stays within eps_cc/10 of it on
    its support, and subtracts T_{w_n} profile from every r_n. The number of rounds is
    capped at 1 + eps_cc^-2 max_n ||x_n||^2.

    Args:
        seq: Nonempty lattice sequence
        eps_cc: Target sup-norm of the tail residual
        tail_fraction: Share of the last indices used as the tail
        strict: Raise NonConvergentTailError when the surrogate fails; otherwise stop
            and return the partial result with converged=False

    Returns:
        DecompositionResult
    """
    if seq.N == 0:
        raise ValidationError("cannot decompose an empty sequence")
    if not eps_cc > 0:
        raise ValidationError(f"eps_cc must be > 0, got {eps_cc}")
    if not 0 < tail_fraction <= 1:
        raise ValidationError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")

    N = seq.N
    tail_start = min(N - 1, int(math.floor((1.0 - tail_fraction) * N)))
    tail = range(tail_start, N)
    cap = 1 + max(seq.norms()) ** 2 / eps_cc ** 2
    tolerance = CAUCHY_FRACTION * eps_cc

    residual = [dict(e) for e in seq.entries]
    profiles: List[Entry] = []
    tracks: List[List[Site]] = []
    notes: List[str] = []
    converged = True

    def tail_sup() -> float:
        return max(sup_norm(residual[n]) for n in tail)

    while tail_sup() > eps_cc:
        if len(profiles) + 1 > cap:
            notes.append(f"profile cap {cap:.3g} reached")
            converged = False
            break

        track, last = [], (0, 0)
        for entry in residual:
            site = _argmax_site(entry)
            last = site if site is not None else last
            track.append(last)
        recentred = [translate(residual[n], (-track[n][0], -track[n][1])) for n in tail]
        profile = _tail_profile(recentred, seq.d)
        defect = _cauchy_defect(recentred, profile)

        if not profile or defect > tolerance:
            message = (f"profile {len(profiles) + 1}: tail is not Cauchy "
                       f"(deviation {defect:.3e} > {tolerance:.3e})" if profile else
                       f"profile {len(profiles) + 1}: tail median vanishes")
            notes.append(message)
            converged = False
            break

        for n in range(N):
            residual[n] = _subtract(residual[n], translate(profile, track[n]))
        profiles.append(profile)
        tracks.append(track)
        logger.info("extracted profile %d: norm %.6g, sup %.6g, tail residual %.3e",
                    len(profiles), lattice_norm(profile), sup_norm(profile), tail_sup())

    last_norm = lattice_norm(seq.entries[-1]) ** 2
    norm_gap = abs(last_norm - sum(lattice_norm(p) ** 2 for p in profiles)
                   - lattice_norm(residual[-1]) ** 2)
    result = DecompositionResult(profiles=profiles, tracks=tracks, residual=residual,
                                 residual_sup=tail_sup(), norm_gap=norm_gap,
                                 min_track_distance=_min_distance(tracks),
                                 tail_start=tail_start, eps_cc=eps_cc,
                                 converged=converged, notes=notes)
    if not converged:
        logger.warning("decomposition stopped: %s", notes[-1])
        if strict:
            raise NonConvergentTailError(notes[-1], result)
    return result


def synthesize(profiles: Sequence[Entry], tracks: Sequence[Sequence[int]], noise_amp: float = 0.0,
               seed: int = 0, N: int = 32, offsets: Optional[Sequence[Sequence[int]]] = None,
               d: Optional[int] = None) -> LatticeSequence:
    """
    x_n = sum_l T_{n v_l + o_l} x^l + noise, n = 1..N

    Args:
        profiles: Profiles x^l
        tracks: Velocity v_l per profile (w_nl = n v_l + o_l)
        noise_amp: Standard deviation of Gaussian noise added on every occupied site
        seed: Noise seed
        N: Sequence length
        offsets: Optional o_l per profile, default 0
        d: Fiber dimension (needed only when there are no profiles)

    Returns:
        LatticeSequence
    """
    if len(tracks) != len(profiles):
        raise ValidationError(f"{len(profiles)} profiles but {len(tracks)} tracks")
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    if d is None:
        if not profiles:
            d = 1
        else:
            d = int(np.asarray(next(iter(profiles[0].values()))).size) if profiles[0] else 1
    offsets = offsets if offsets is not None else [(0, 0)] * len(profiles)
    rng = np.random.default_rng(seed)

    entries = []
    for n in range(1, N + 1):
        entry: Entry = {}
        for profile, velocity, offset in zip(profiles, tracks, offsets):
            v, o = _site(velocity), _site(offset)
            w = (n * v[0] + o[0], n * v[1] + o[1])
            for j, value in translate(profile, w).items():
                entry[j] = entry.get(j, np.zeros(d)) + np.asarray(value, dtype=float)
        if noise_amp > 0:
            for j in sorted(entry):
                entry[j] = entry[j] + noise_amp * rng.standard_normal(d)
        entries.append(entry)
    return LatticeSequence(entries, d)
