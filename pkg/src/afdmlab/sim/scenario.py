"""Scenario description, config loading and presets."""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..channel import PathSet, PrefixSpec, PulseKernel
from ..detectors import DetectorConfig
from ..impairments import ImpairmentConfig
from ..metrics import ConfigError
from ..transforms import ChirpParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


CSI_MODES = ("perfect", "perfect_full", "pilot")
CHANNEL_MODELS = ("fixed", "random", "identity")
PRESETS = ("fig1", "fig2", "fig5", "fig9_phn", "fig9_cfo", "table1")


@dataclass(frozen=True)
class ChannelSpec:
    """Fixed path list, random Rayleigh draw, or the identity (AWGN) channel.

    For ``random``: ``delays`` are fixed, gains are CN(0, power) with
    ``power`` normalized to unit sum, and Dopplers are ``f_max cos(u)`` with
    ``u`` uniform on [0, 2 pi).
    """

    model: str = "identity"
    gains: tuple = ()
    delays: tuple = ()
    dopplers: tuple = ()
    power: tuple = ()
    ell_max: float | None = None
    f_max: float | None = None
    kernel: str = "sinc"
    rolloff: float = 0.0
    half_width: int | None = None
    phase_arg: str = "sample"

    def __post_init__(self):
        if self.model not in CHANNEL_MODELS:
            raise ConfigError(f"unknown channel model {self.model!r}")
        if self.model == "fixed" and not (len(self.gains) == len(self.delays) == len(self.dopplers) > 0):
            raise ConfigError("fixed channel needs equal-length gains, delays, dopplers")
        if self.model == "random":
            if not self.delays:
                raise ConfigError("random channel needs delays")
            if self.power and len(self.power) != len(self.delays):
                raise ConfigError("power profile length must match delays")

    @property
    def pulse(self) -> PulseKernel:
        return PulseKernel(self.kernel, self.rolloff, self.half_width)

    @property
    def n_paths(self) -> int:
        return 1 if self.model == "identity" else len(self.delays)

    @property
    def spread(self) -> tuple[float, float]:
        if self.model == "identity":
            return 0.0, 0.0
        lm = self.ell_max if self.ell_max is not None else max(self.delays)
        if self.f_max is not None:
            fm = self.f_max
        else:
            fm = max(abs(float(f)) for f in self.dopplers) if self.dopplers else 0.0
        return float(lm), float(fm)

    def fixed_paths(self) -> PathSet | None:
        if self.model == "identity":
            return PathSet.from_paths([(1.0, 0.0, 0.0)], 0.0, 0.0)
        if self.model == "fixed":
            lm, fm = self.spread
            return PathSet.from_paths(zip(self.gains, self.delays, self.dopplers), lm, fm)
        return None


@dataclass(frozen=True)
class CsiSpec:
    """Receiver channel knowledge.

    ``perfect`` knows the propagation channel but not the oscillator
    impairments, ``perfect_full`` knows both, ``pilot`` estimates from an
    embedded pilot (AFDM) or a pilot comb (OFDM).
    """

    mode: str = "perfect"
    guard_q: int | None = None
    pilot_power: float | None = None
    comb_spacing: int = 4
    interpolation: str = "dft"
    grid_step: float = 0.02
    known_p: int | None = None

    def __post_init__(self):
        if self.mode not in CSI_MODES:
            raise ConfigError(f"unknown CSI mode {self.mode!r}")
        if self.interpolation not in ("linear", "dft"):
            raise ConfigError("interpolation must be 'linear' or 'dft'")
        if self.comb_spacing < 1:
            raise ConfigError("comb spacing must be >= 1")


@dataclass(frozen=True)
class SweepSpec:
    snr_db: tuple = (0.0, 5.0, 10.0)
    min_frames: int = 10
    max_frames: int = 100
    target_bit_errors: int = 200
    batch: int = 16

    def __post_init__(self):
        if not self.snr_db:
            raise ConfigError("snr_points must be nonempty")
        if self.max_frames < self.min_frames or self.min_frames < 1:
            raise ConfigError("need 1 <= min_frames <= max_frames")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")


@dataclass(frozen=True)
class SimScenario:
    """Full experiment description.

    ``waveforms`` lists the waveforms simulated side by side under identical
    channel, noise and impairment draws.  ``include_ideal`` adds a second run
    of every waveform with impairments disabled.  ``chirp`` of ``None`` picks
    the minimal orthogonal lambda1 for the channel's Doppler spread plus
    ``guard_xi``, with lambda2 = 1/(2N).
    """

    scenario_id: str = "scenario"
    n: int = 64
    ncp: int | None = None
    ts: float | None = None
    waveforms: tuple = ("afdm",)
    chirp: ChirpParams | None = None
    guard_xi: int = 0
    order: int = 4
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    csi: CsiSpec = field(default_factory=CsiSpec)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    impairments: ImpairmentConfig = field(default_factory=ImpairmentConfig)
    include_ideal: bool = False
    sweep: SweepSpec = field(default_factory=SweepSpec)
    master_seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not self.waveforms or any(w not in ("afdm", "ofdm") for w in self.waveforms):
            raise ConfigError("waveforms must be a nonempty subset of {afdm, ofdm}")
        cfo = self.impairments.cfo or 0.0
        if abs(cfo) >= self.n / 2:
            raise ConfigError("|cfo| must stay below N/2")
        lm, _ = self.channel.spread
        if self.prefix_length < lm:
            raise ConfigError("prefix shorter than the maximum delay")

    @property
    def prefix_length(self) -> int:
        """``ncp`` or, by default, the delay spread plus the kernel tail for fractional delays."""
        if self.ncp is not None:
            return int(self.ncp)
        lm, _ = self.channel.spread
        frac = any(not float(d).is_integer() for d in self.channel.delays)
        return int(math.ceil(lm)) + (self.channel.pulse.B if frac else 0)

    @property
    def f_design(self) -> float:
        """Doppler range the AFDM chirp must cover, channel plus CFO."""
        _, fm = self.channel.spread
        return fm + abs(self.impairments.cfo or 0.0)

    def chirp_params(self) -> ChirpParams:
        if self.chirp is not None:
            return self.chirp
        return ChirpParams.for_channel(self.n, self.f_design, self.guard_xi)

    def prefix(self, waveform: str) -> PrefixSpec:
        if waveform == "ofdm":
            return PrefixSpec(self.prefix_length, "cp")
        return PrefixSpec(self.prefix_length, "cpp", self.chirp_params().lambda1)

    def to_dict(self) -> dict:
        return _strip(dataclasses.asdict(self))

    def replace(self, **kw) -> "SimScenario":
        return dataclasses.replace(self, **kw)


def _strip(d):
    if isinstance(d, dict):
        return {k: _strip(v) for k, v in d.items() if v is not None}
    if isinstance(d, (list, tuple)):
        return [_strip(v) for v in d]
    if isinstance(d, complex):
        return [d.real, d.imag]
    return d


def _tuples(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, list):
            v = tuple(complex(*x) if isinstance(x, list) and len(x) == 2 else x for x in v)
        out[k] = v
    return out


_SECTIONS = {
    "channel": ChannelSpec,
    "csi": CsiSpec,
    "detector": DetectorConfig,
    "impairments": ImpairmentConfig,
    "sweep": SweepSpec,
}


def scenario_from_dict(d: dict) -> SimScenario:
    """Build a scenario from a nested mapping mirroring the dataclass fields."""
    d = dict(d)
    kw = {}
    known = {f.name for f in dataclasses.fields(SimScenario)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    for name, cls in _SECTIONS.items():
        if name in d:
            sub = _tuples(d.pop(name) or {})
            fields = {f.name for f in dataclasses.fields(cls)}
            bad = set(sub) - fields
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            kw[name] = cls(**sub)
    if d.get("chirp") is not None:
        c = d.pop("chirp")
        kw["chirp"] = ChirpParams(**c)
    if "waveforms" in d:
        w = d.pop("waveforms")
        kw["waveforms"] = (w,) if isinstance(w, str) else tuple(w)
    kw.update(d)
    try:
        return SimScenario(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> SimScenario:
    """Read a TOML or JSON scenario file."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        d = json.loads(raw)
    elif path.suffix.lower() == ".toml":
        d = tomllib.loads(raw.decode())
    else:
        raise ConfigError(f"scenario file must be .toml or .json, got {path.suffix!r}")
    return scenario_from_dict(d)


def save_scenario_json(sc: SimScenario, path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=2) + "\n")


# --------------------------------------------------------------------------
# presets

FIG5_PATHS = ChannelSpec(
    "fixed", gains=(1.0, 0.9, 0.8), delays=(1.3, 3.25, 5.96), dopplers=(1.1, -2.3, 0.85), ell_max=6.0, f_max=3.0
)

# fig9 preset profile: three equal-power Rayleigh taps
# at integer delays with small fractional Dopplers f_max cos(u).
FIG9_CHANNEL = ChannelSpec("random", delays=(0.0, 4.0, 8.0), power=(1.0, 1.0, 1.0), ell_max=8.0, f_max=0.01)
FIG9_PHN_VAR = 1e-4
FIG9_CFO = 0.1


def _fig9(name: str, imp: ImpairmentConfig) -> SimScenario:
    return SimScenario(
        scenario_id=name,
        n=128,
        ncp=16,
        waveforms=("afdm", "ofdm"),
        guard_xi=1,
        order=4,
        channel=FIG9_CHANNEL,
        csi=CsiSpec("pilot"),
        detector=DetectorConfig("mmse"),
        impairments=imp,
        include_ideal=True,
        sweep=SweepSpec(tuple(float(s) for s in range(0, 41, 4)), 100, 4000, 200, 50),
        master_seed=9,
    )


def preset(name: str):
    """Scenario (fig5, fig9_*) or dump job description (fig1, fig2, table1)."""
    if name == "fig1":
        return {
            "kind": "dump",
            "n": 64,
            "paths": [ChannelSpec("fixed", (1.0,), (4.0,), (2.0,)), ChannelSpec("fixed", (1.0,), (4.3,), (2.1,))],
            "chirp": ChirpParams(7 / 128, 1 / 128),
        }
    if name == "fig2":
        return {
            "kind": "dump",
            "n": 64,
            "paths": [ChannelSpec("fixed", (1.0,), (4.3,), (0.0,)), ChannelSpec("fixed", (1.0,), (4.3,), (2.1,))],
            "chirp": ChirpParams(7 / 128, 1 / 128),
        }
    if name == "fig5":
        # c1 = (2 (f_max + 1) + 1) / (2N) with f_max = 3, c2 = 1 / (2N)
        n = 64
        return SimScenario(
            scenario_id="fig5",
            n=n,
            ncp=16,
            waveforms=("afdm",),
            chirp=ChirpParams((2 * (3 + 1) + 1) / (2 * n), 1 / (2 * n), 1),
            channel=FIG5_PATHS,
        )
    if name == "fig9_cfo":
        return _fig9("fig9_cfo", ImpairmentConfig(cfo=FIG9_CFO))
    if name == "fig9_phn":
        return _fig9("fig9_phn", ImpairmentConfig(phn_var=FIG9_PHN_VAR))
    if name == "table1":
        return {"kind": "cost", "n": (256, 1024, 4096)}
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
