"""Eigenvalue configuration samplers and persistence.

Two routes to the n-point law with density proportional to
``exp(-H_n)``, ``H_n = sum_{j!=k} log 1/|λ_j - λ_k| + 2n sum_j Q(λ_j)``:

* exact sequential sampling of the determinantal projection process driven
  by a kernel model (conditional densities via Gram-Schmidt in feature
  space, rejection against a uniform disk proposal);
* Metropolis random walk on the Coulomb-gas energy with single-site
  Gaussian proposals of scale 1/sqrt(n) by default.

Randomness comes from numpy's Philox counter-based 64-bit generator with
per-chain stream splitting, so every draw is reproducible from its seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ParameterError, ParseError, SamplerError, SchemaError

PROPOSAL_BATCH = 512
MAX_BATCHES_PER_POINT = 400


def _rng(seed, stream=0):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    gen = np.random.Generator(np.random.Philox(key=seed))
    if stream:
        gen = np.random.Generator(np.random.Philox(key=seed).jumped(stream))
    return gen


@dataclass(frozen=True)
class Configuration:
    """One sampled n-point eigenvalue set with provenance."""

    points: np.ndarray
    n: int
    potential_id: str
    perturbation_id: str
    tag: str                      # "dpp" | "mcmc"
    seed: int
    sweep: int | None = None
    acceptance: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.size != self.n or not np.all(np.isfinite(pts)):
            raise ParameterError("configuration must hold exactly n finite points",
                                 n=self.n, size=int(pts.size))
        if self.tag == "mcmc" and self.acceptance is not None:
            if not 0.0 < self.acceptance < 1.0:
                raise ParameterError("mcmc acceptance rate must lie in (0, 1)",
                                     acceptance=self.acceptance)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class ChainConfig:
    """Metropolis chain parameters; proposal scale defaults to 1/sqrt(n)."""

    sweeps: int
    burn_in: int = 0
    thinning: int = 1
    proposal_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.sweeps > self.burn_in >= 0):
            raise ParameterError("need sweeps > burn_in >= 0",
                                 sweeps=self.sweeps, burn_in=self.burn_in)
        if self.thinning < 1:
            raise ParameterError("thinning must be >= 1", thinning=self.thinning)


def hamiltonian(p, h, points):
    """Coulomb-gas energy of the configuration; +inf for coincident points.

    ``sum_{j!=k} log 1/|λ_j-λ_k| + 2n sum Q̃(λ_j)`` with Q̃ = Q - h/n, so the
    perturbation contributes ``-2 sum h(λ_j)``.
    """
    pts = np.asarray(points, dtype=complex)
    n = pts.size
    energy = 2.0 * n * float(np.sum(p.value(pts)))
    if h is not None:
        energy -= 2.0 * float(np.sum(h(pts.real, pts.imag)))
    if n > 1:
        iu = np.triu_indices(n, k=1)
        d = np.abs(pts[:, None] - pts[None, :])[iu]
        if np.any(d == 0.0):
            return math.inf
        energy -= 2.0 * float(np.sum(np.log(d)))
    return energy


# ---------------------------------------------------------------------------
# Exact determinantal sampling
# ---------------------------------------------------------------------------

def _dpp_envelope(km):
    """Upper bound for the kernel diagonal over its effective support."""
    r = np.linspace(0.0, km.effective_radius, 2048)
    if km.mode == "radial":
        peak = float(np.max(km.kdiag(r + 0j)))
        return 1.15 * peak
    t = np.linspace(0.0, 2.0 * np.pi, 96, endpoint=False)
    R, T = np.meshgrid(r[::4], t, indexing="ij")
    peak = float(np.max(km.kdiag((R * np.exp(1j * T)).ravel())))
    return 1.5 * peak


def sample_dpp(km, seed):
    """Draw one configuration of the projection process of ``km``.

    Sequential conditional sampling: after j accepted points the next point
    has density ``K(z,z) - sum_i |<φ(z), e_i>|^2`` (integrating to n-j),
    sampled by rejection from the uniform disk of the effective support
    radius.  Deterministic given the seed.
    """
    rng = _rng(seed)
    n = km.n
    r_samp = km.effective_radius
    envelope = _dpp_envelope(km)
    basis = np.zeros((n, n), dtype=complex)
    points = np.empty(n, dtype=complex)
    for j in range(n):
        accepted = None
        for _ in range(MAX_BATCHES_PER_POINT):
            u = rng.random(PROPOSAL_BATCH)
            v = rng.random(PROPOSAL_BATCH)
            a = rng.random(PROPOSAL_BATCH)
            z = r_samp * np.sqrt(u) * np.exp(2j * np.pi * v)
            phi = km.features(z)
            dens = np.sum(np.abs(phi) ** 2, axis=1)
            if j:
                proj = basis[:j].conj() @ phi.T
                dens = dens - np.sum(np.abs(proj) ** 2, axis=0)
            dens = np.maximum(dens, 0.0)
            if np.any(dens > envelope):
                raise SamplerError("conditional density exceeded its envelope",
                                   envelope=envelope, observed=float(dens.max()))
            hits = np.nonzero(a * envelope < dens)[0]
            if hits.size:
                k = int(hits[0])
                accepted = z[k]
                phi_acc = phi[k]
                break
        if accepted is None:
            raise SamplerError(
                "rejection sampling starved; proposal budget exhausted",
                point_index=j, budget=MAX_BATCHES_PER_POINT * PROPOSAL_BATCH)
        # Gram-Schmidt with one re-orthogonalization pass for stability.
        vec = phi_acc
        for _ in range(2):
            if j:
                vec = vec - (basis[:j].conj() @ vec) @ basis[:j]
        norm = np.linalg.norm(vec)
        if norm <= 0.0:
            raise SamplerError("degenerate feature vector during sampling",
                               point_index=j)
        basis[j] = vec / norm
        points[j] = accepted
    return Configuration(
        points=points, n=n, potential_id=km.potential.ident,
        perturbation_id=km.h.name if km.h is not None else "",
        tag="dpp", seed=int(seed),
        meta={"sampler": "sequential-projection", "envelope": envelope,
              "proposal_radius": r_samp},
    )


def sample_dpp_many(km, count, seed):
    """Independent configurations with per-sample derived streams."""
    return [sample_dpp_stream(km, seed, i) for i in range(count)]


def sample_dpp_stream(km, seed, stream):
    rng_seed = (int(seed) ^ (0x9E3779B97F4A7C15 * (stream + 1))) & 0xFFFFFFFFFFFFFFFF
    cfg = sample_dpp(km, rng_seed)
    return cfg


# ---------------------------------------------------------------------------
# Metropolis sampling
# ---------------------------------------------------------------------------

def metropolis_log_ratio(p, h, n, points, idx, proposal):
    """Log acceptance ratio for moving ``points[idx]`` to ``proposal``.

    The proposal is symmetric, so the ratio depends only on the energy
    difference.
    """
    old = points[idx]
    others = np.delete(points, idx)
    with np.errstate(divide="ignore"):
        gain = 2.0 * np.sum(np.log(np.abs(proposal - others)))
        loss = 2.0 * np.sum(np.log(np.abs(old - others)))
    dfield = 2.0 * n * float(p.value(np.asarray([proposal]))[0]
                             - p.value(np.asarray([old]))[0])
    if h is not None:
        dfield -= 2.0 * float(h(proposal.real, proposal.imag)
                              - h(old.real, old.imag))
    return float(gain - loss - dfield)


def sample_mcmc(p, h, n, chain):
    """Generator of approximately distributed configurations after burn-in.

    Single-site Gaussian proposals; yields every ``thinning`` sweeps with the
    running acceptance rate attached.  A tuning note lands in the metadata
    when the post-burn-in acceptance rate leaves [0.1, 0.7].
    """
    rng = _rng(chain.seed)
    scale = chain.proposal_scale if chain.proposal_scale is not None \
        else 1.0 / math.sqrt(n)
    if p.kind == "radial":
        from .potential import solve_droplet
        r0 = solve_droplet(p).radius
    else:
        r0 = 1.0
    u = rng.random(n)
    v = rng.random(n)
    points = r0 * np.sqrt(u) * np.exp(2j * np.pi * v)
    accepted = 0
    proposed = 0
    for sweep in range(1, chain.sweeps + 1):
        steps = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        logs = np.log(rng.random(n))
        for i in range(n):
            cand = points[i] + steps[i]
            ratio = metropolis_log_ratio(p, h, n, points, i, cand)
            proposed += 1
            if logs[i] < ratio:
                points[i] = cand
                accepted += 1
        if sweep > chain.burn_in and (sweep - chain.burn_in) % chain.thinning == 0:
            rate = accepted / proposed
            meta = {"proposal_scale": scale}
            if not 0.1 <= rate <= 0.7:
                meta["tuning"] = ("acceptance rate outside [0.1, 0.7]; "
                                  "adjust the proposal scale")
            yield Configuration(
                points=points.copy(), n=n, potential_id=p.ident,
                perturbation_id=h.name if h is not None else "",
                tag="mcmc", seed=int(chain.seed), sweep=sweep,
                acceptance=min(max(rate, 1e-12), 1.0 - 1e-12), meta=meta)


# ---------------------------------------------------------------------------
# Persistence (JSONL)
# ---------------------------------------------------------------------------

def save_configurations(path, configs):
    """Write configurations as JSONL with a leading header line.

    Coordinates use shortest round-trip decimal form, so loading is
    bit-exact.
    """
    configs = list(configs)
    with open(path, "w", encoding="utf-8") as fh:
        if configs:
            head = {"header": {"n": configs[0].n,
                               "pot": configs[0].potential_id,
                               "tag": configs[0].tag}}
            fh.write(json.dumps(head, separators=(",", ":")) + "\n")
        for c in configs:
            row = {
                "n": c.n,
                "pot": c.potential_id,
                "tag": c.tag,
                "seed": c.seed,
                "pts": [[float(z.real), float(z.imag)] for z in c.points],
                "meta": {"perturbation": c.perturbation_id,
                         "sweep": c.sweep,
                         "acceptance": c.acceptance,
                         **c.meta},
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def load_configurations(path):
    """Read configurations from JSONL; empty files yield an empty list."""
    out = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSONL at line {lineno}: {exc.msg}",
                                 line=lineno) from exc
            if "header" in obj:
                header = obj["header"]
                continue
            missing = {"n", "pot", "tag", "seed", "pts"} - set(obj)
            if missing:
                raise SchemaError(f"line {lineno} lacks keys {sorted(missing)}",
                                  line=lineno)
            if header is not None and obj["n"] != header["n"]:
                raise SchemaError(
                    f"line {lineno}: n={obj['n']} contradicts header n={header['n']}",
                    line=lineno)
            meta = obj.get("meta", {})
            pts = np.array([complex(x, y) for x, y in obj["pts"]])
            out.append(Configuration(
                points=pts, n=int(obj["n"]), potential_id=obj["pot"],
                perturbation_id=meta.get("perturbation", ""),
                tag=obj["tag"], seed=int(obj["seed"]),
                sweep=meta.get("sweep"), acceptance=meta.get("acceptance"),
                meta={k: v for k, v in meta.items()
                      if k not in ("perturbation", "sweep", "acceptance")}))
    return out
