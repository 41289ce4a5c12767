"""System description: geometries, couplings, noise rates, and term lists.

Everything downstream (dense integrator, tensor-network evolver, experiment
drivers) consumes the data structures built here, so both backends see one
and the same Hamiltonian and dissipator inventory.

Unit conventions, used consistently across the package:
    couplings / splittings : rad/us (angular frequency)
    noise rates            : 1/us
    times                  : us
    distances              : nm
Boundary-facing code (CLI, config files) accepts ordinary-frequency MHz and
kHz and converts once on parse; see `cli.py`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# CODATA 2018
_MU0 = 1.25663706212e-6        # vacuum permeability, N/A^2
_G_E = 2.00231930436256        # electron g-factor
_MU_B = 9.2740100783e-24       # Bohr magneton, J/T
_HBAR = 1.054571817e-34        # J s

RAILS = ("B", "T")             # bottom / top rail labels

ANCILLA = "anc"
NV_LEFT = "nvL"
NV_RIGHT = "nvR"
DUMMY = "dummy"


def dipolar_coupling(r_nm):
    """Secular dipolar coupling of two electron spins at distance r_nm.

    Returns the angular frequency mu0 g_e^2 mu_B^2 / (8 pi r^3 hbar) in
    rad/us.  Divide by 2*pi for the ordinary frequency in MHz.
    """
    if r_nm <= 0:
        raise ValueError("spin separation must be positive")
    r = r_nm * 1e-9
    w_rad_s = _MU0 * _G_E**2 * _MU_B**2 / (8.0 * math.pi * r**3 * _HBAR)
    return w_rad_s * 1e-6


def channel_spin(site, rail):
    """Canonical name of the channel spin at column `site` on `rail`."""
    return f"c{site}{rail}"


@dataclass(frozen=True)
class Geometry:
    """Channel geometry: a single chain or a two-rail ladder of length n."""

    kind: str          # "chain" | "ladder"
    n: int             # number of channel columns between the NV centers

    def __post_init__(self):
        if self.kind not in ("chain", "ladder"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("channel length must be >= 1")

    @property
    def rails(self):
        return RAILS if self.kind == "ladder" else RAILS[:1]

    @property
    def n_channel_spins(self):
        return self.n * len(self.rails)

    @property
    def total_spins(self):
        """All simulated spins: ancilla + 2 NV + channel (+ dummy for ladder)."""
        return self.n_channel_spins + (4 if self.kind == "ladder" else 3)

    def channel_spins(self):
        """Channel spin names in column-major order (c1B, c1T, c2B, ...)."""
        return tuple(
            channel_spin(i, r) for i in range(1, self.n + 1) for r in self.rails
        )


def _as_rail_pair(value):
    a, b = value
    return (float(a), float(b))


@dataclass(frozen=True)
class ChannelSpec:
    """Complete physical description of one register-channel-register system.

    Couplings are flip-flop (hopping) strengths in rad/us; `splitting` is the
    coefficient of the NV sigma_z terms (stored as the full splitting, the
    Hamiltonian carries splitting/2 per NV); noise rates are plain 1/us.

    `rail_couplings[i]` couples column i+1 to column i+2 on each rail;
    `rung_couplings[i]` couples the two rails within column i+1 (ladder only);
    `left_nv_coupling[r]` couples NV_L to column 1 on rail r, and
    `right_nv_coupling[r]` couples NV_R to column n.  Chains only use rail B.

    `missing` lists channel spins that are absent: every Hamiltonian and
    dissipator term touching an absent spin is dropped.  The ancilla and the
    dummy never carry terms of their own.
    """

    geometry: Geometry
    left_nv_coupling: tuple
    right_nv_coupling: tuple
    rail_couplings: tuple        # ((B, T), ...)  length n-1
    rung_couplings: tuple = ()   # length n for ladder, () for chain
    splitting: float = 0.0
    nv_noise_rate: float = 0.0
    channel_noise_rate: float = 0.0
    missing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        g = self.geometry
        object.__setattr__(self, "left_nv_coupling", _as_rail_pair(self.left_nv_coupling))
        object.__setattr__(self, "right_nv_coupling", _as_rail_pair(self.right_nv_coupling))
        object.__setattr__(
            self, "rail_couplings", tuple(_as_rail_pair(v) for v in self.rail_couplings)
        )
        object.__setattr__(self, "rung_couplings", tuple(float(v) for v in self.rung_couplings))
        object.__setattr__(self, "missing", frozenset(self.missing))
        if len(self.rail_couplings) != g.n - 1:
            raise ValueError(f"need {g.n - 1} rail coupling rows, got {len(self.rail_couplings)}")
        want_rungs = g.n if g.kind == "ladder" else 0
        if len(self.rung_couplings) != want_rungs:
            raise ValueError(f"need {want_rungs} rung couplings, got {len(self.rung_couplings)}")
        values = [*self.left_nv_coupling, *self.right_nv_coupling,
                  *(x for row in self.rail_couplings for x in row),
                  *self.rung_couplings,
                  self.nv_noise_rate, self.channel_noise_rate]
        for v in values:
            if not math.isfinite(v) or v < 0:
                raise ValueError("couplings and rates must be finite and non-negative")
        if not math.isfinite(self.splitting):
            raise ValueError("splitting must be finite")
        for site, rail in self.missing:
            if not (1 <= site <= g.n) or rail not in g.rails:
                raise ValueError(f"missing spin ({site}, {rail}) outside the channel")

    def is_missing(self, site, rail):
        return (site, rail) in self.missing

    def present_channel_spins(self):
        g = self.geometry
        return tuple(
            channel_spin(i, r)
            for i in range(1, g.n + 1)
            for r in g.rails
            if not self.is_missing(i, r)
        )

    def max_coupling(self):
        """Largest coupling magnitude, used for step-size heuristics."""
        vals = [*self.left_nv_coupling, *self.right_nv_coupling,
                *(x for row in self.rail_couplings for x in row),
                *self.rung_couplings, abs(self.splitting) / 2.0]
        return max(vals) if vals else 0.0


@dataclass(frozen=True)
class SiteLayout:
    """Grouping of spins into lattice sites for the tensor backend.

    Chains keep one spin per site.  Ladders fuse each column into one
    four-level site; the ancilla rides with NV_L in the first site and a
    non-interacting dummy pads NV_R in the last, so every site has equal
    dimension.  Within a fused site the first named spin is the most
    significant tensor factor.
    """

    sites: tuple  # tuple of tuples of spin names

    @property
    def dims(self):
        return tuple(2 ** len(s) for s in self.sites)

    @property
    def n_sites(self):
        return len(self.sites)

    @property
    def flat_spins(self):
        return tuple(sp for group in self.sites for sp in group)

    @property
    def total_spins(self):
        return len(self.flat_spins)

    def locate(self, spin):
        """(site index, factor index within the site) of a named spin."""
        for i, group in enumerate(self.sites):
            if spin in group:
                return i, group.index(spin)
        raise KeyError(spin)


def build_layout(geometry):
    """Site layout for a geometry; see SiteLayout for the grouping rules."""
    n = geometry.n
    if geometry.kind == "chain":
        sites = [(ANCILLA,), (NV_LEFT,)]
        sites += [(channel_spin(i, "B"),) for i in range(1, n + 1)]
        sites.append((NV_RIGHT,))
    else:
        sites = [(ANCILLA, NV_LEFT)]
        sites += [(channel_spin(i, "B"), channel_spin(i, "T")) for i in range(1, n + 1)]
        sites.append((NV_RIGHT, DUMMY))
    return SiteLayout(sites=tuple(sites))


@dataclass(frozen=True)
class HamiltonianTerms:
    """Spin-level term inventory.

    one_site: tuples (spin, op, strength) where op "z" means strength*sigma_z.
    two_site: tuples (spin_a, spin_b, op, strength) where op "hop" means
        strength * (sigma+_a sigma-_b + sigma-_a sigma+_b).
    """

    one_site: tuple
    two_site: tuple

    def coupling_graph_edges(self):
        return tuple((a, b) for a, b, _op, s in self.two_site if s != 0.0)


def build_hamiltonian(spec):
    """Assemble the full term list for a ChannelSpec.

    Terms touching a missing channel spin are omitted entirely.  The ancilla
    and the dummy spin never appear.
    """
    g = spec.geometry
    n = g.n
    one = []
    if spec.splitting != 0.0:
        one.append((NV_LEFT, "z", spec.splitting / 2.0))
        one.append((NV_RIGHT, "z", spec.splitting / 2.0))

    present = set(spec.present_channel_spins())
    two = []

    def hop(a, b, s):
        if s != 0.0 and (a in present or a in (NV_LEFT, NV_RIGHT)) \
                and (b in present or b in (NV_LEFT, NV_RIGHT)):
            two.append((a, b, "hop", float(s)))

    for ri, rail in enumerate(g.rails):
        hop(NV_LEFT, channel_spin(1, rail), spec.left_nv_coupling[ri])
        hop(channel_spin(n, rail), NV_RIGHT, spec.right_nv_coupling[ri])
        for i in range(1, n):
            hop(channel_spin(i, rail), channel_spin(i + 1, rail),
                spec.rail_couplings[i - 1][ri])
    if g.kind == "ladder":
        for i in range(1, n + 1):
            hop(channel_spin(i, "B"), channel_spin(i, "T"), spec.rung_couplings[i - 1])

    return HamiltonianTerms(one_site=tuple(one), two_site=tuple(two))


def build_dissipators(spec):
    """List of (spin, op, rate) sigma_x dissipators.

    Both NV centers always dephase at nv_noise_rate; every *present* channel
    spin dephases at channel_noise_rate.  Zero-rate entries are omitted,
    which is equivalent to keeping them at rate 0.
    """
    out = []
    if spec.nv_noise_rate > 0.0:
        out.append((NV_LEFT, "x", spec.nv_noise_rate))
        out.append((NV_RIGHT, "x", spec.nv_noise_rate))
    if spec.channel_noise_rate > 0.0:
        for sp in spec.present_channel_spins():
            out.append((sp, "x", spec.channel_noise_rate))
    return tuple(out)


@dataclass(frozen=True)
class InitialState:
    """Product-form initial state: one singlet pair, everything else down.

    The singlet is (|ud> - |du>)/sqrt(2) on (ancilla, NV_L); every other
    spin, including missing channel spins and the dummy, starts in |d><d|.
    """

    singlet_pair: tuple
    down_spins: tuple


def initial_state_spec(geometry):
    down = [sp for sp in geometry.channel_spins()] + [NV_RIGHT]
    if geometry.kind == "ladder":
        down.append(DUMMY)
    return InitialState(singlet_pair=(ANCILLA, NV_LEFT), down_spins=tuple(down))


def uniform_spec(kind, n, nv_separation_nm=40.0, nv_noise_rate=0.0,
                 channel_noise_rate=0.0, splitting=0.0, missing=(),
                 spacing_nm=None):
    """Evenly spaced channel between NV centers a fixed distance apart.

    All couplings take the dipolar value at the nearest-neighbour distance
    nv_separation_nm / (n + 1).  Passing spacing_nm instead fixes the
    nearest-neighbour distance directly (the NV separation then grows with
    n); exactly one of the two must be given.
    """
    if spacing_nm is not None:
        r = float(spacing_nm)
    else:
        r = float(nv_separation_nm) / (n + 1)
    w = dipolar_coupling(r)
    geom = Geometry(kind, n)
    pair = (w, w) if kind == "ladder" else (w, 0.0)
    return ChannelSpec(
        geometry=geom,
        left_nv_coupling=pair,
        right_nv_coupling=pair,
        rail_couplings=tuple(pair for _ in range(n - 1)),
        rung_couplings=tuple(w for _ in range(n)) if kind == "ladder" else (),
        splitting=splitting,
        nv_noise_rate=nv_noise_rate,
        channel_noise_rate=channel_noise_rate,
        missing=missing,
    )
