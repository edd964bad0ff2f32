"""Monte Carlo studies: one-sample coverage, two-sample size/power, detection comparison.

Every replicate draws its data and quantile streams from
``SeedSequence(seed, spawn_key=(rep, stream))``, so results do not depend on
the number of worker threads or on execution order.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import load_fixture
from .detection import bonferroni, cluster_threshold, detection_metrics, scc_discoveries
from .estimator import ImageStack
from .parallel import pmap
from .pipeline import FitConfig, analyze, systems_for
from .scc import BASIC, TwoSampleContext, scc_one_multi, scc_two_multi
from .simulation import SimDesign, generate_stack, rep_stream, stream_int

DATA, QUANT, AUX = 0, 1, 2


def _fmt_table(header, rows) -> str:
    cells = [header] + [[r if isinstance(r, str) else f"{r:.3f}" for r in row] for row in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    out = io.StringIO()
    for k, row in enumerate(cells):
        out.write("  ".join(c.rjust(w) for c, w in zip(row, widths)) + "\n")
        if k == 0:
            out.write("  ".join("-" * w for w in widths) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------- coverage


@dataclass
class CoverageTable:
    design: dict
    meshes: list
    alphas: list
    coverage: dict = field(default_factory=dict)  # mesh -> alpha -> rate
    width: dict = field(default_factory=dict)  # mesh -> alpha -> mean full width
    reps: int = 0
    B: int = 0
    variant: str = BASIC
    extras: dict = field(default_factory=dict)

    def rows(self):
        for m in self.meshes:
            for a in self.alphas:
                yield m, a, self.coverage[m][a], self.width[m][a]

    def to_csv(self) -> str:
        lines = ["mesh,alpha,coverage,mean_width"]
        lines += [f"{m},{a!r},{c!r},{w!r}" for m, a, c, w in self.rows()]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = ["mesh"] + [f"a={a:g}" for a in self.alphas]
        rows = []
        for m in self.meshes:
            rows.append([m] + [f"{self.coverage[m][a]:.3f} ({self.width[m][a]:.3f})" for a in self.alphas])
        d = self.design
        title = f"coverage: mean={d['mean_id']} n={d['n']} grid={d['grid']} reps={self.reps} B={self.B} variant={self.variant}\n"
        return title + _fmt_table(header, rows)

    def as_dict(self) -> dict:
        return asdict(self)


def run_coverage(design: SimDesign, meshes=("brain_d1",), alphas=None, reps=None, B: int = 1000,
                 variant: str = BASIC, cfg: FitConfig = FitConfig(), eta_mesh: str | None = None,
                 threads: int = 1) -> CoverageTable:
    """Fraction of replicates whose band contains the true mean at every pixel.

    ``eta_mesh`` fixes the mesh used for subject smoothing; by default each mean
    mesh is reused.
    """
    alphas = tuple(design.alphas if alphas is None else alphas)
    reps = design.reps if reps is None else int(reps)
    grid = design.pixel_grid()
    area = design.domain_mesh().area
    table = CoverageTable(asdict_design(design), list(meshes), list(alphas), reps=reps, B=B, variant=variant)
    for mname in meshes:
        sys_mu, sys_eta = systems_for(load_fixture(mname), load_fixture(eta_mesh) if eta_mesh else None, cfg)

        def one(rep):
            sim = generate_stack(design, rep_stream(design.seed, rep, DATA), grid)
            an = analyze(ImageStack(grid.coords, sim.Y), sys_mu, sys_eta, cfg, domain_area=area)
            bands = scc_one_multi(an.fit, an.model, alphas, B, stream_int(rep_stream(design.seed, rep, QUANT)), variant)
            return [(bands[a].covers(sim.mu), bands[a].mean_width) for a in alphas], an.model.eigenvalues[:2].tolist()

        res = pmap(one, range(reps), threads)
        table.coverage[mname] = {a: float(np.mean([r[0][i][0] for r in res])) for i, a in enumerate(alphas)}
        table.width[mname] = {a: float(np.mean([r[0][i][1] for r in res])) for i, a in enumerate(alphas)}
        lam = np.array([r[1] + [np.nan] * (2 - len(r[1])) for r in res])
        table.extras[mname] = {"mean_lambda": np.nanmean(lam, axis=0).tolist()}
    return table


def asdict_design(design: SimDesign) -> dict:
    d = asdict(design)
    d.pop("custom_mean", None)
    return d


# ---------------------------------------------------------------------- power


@dataclass
class PowerTable:
    design: dict
    meshes: list
    deltas: list
    alphas: list
    reject: dict = field(default_factory=dict)  # mesh -> delta -> alpha -> rate
    reps: int = 0
    B: int = 0
    variant: str = BASIC

    def to_csv(self) -> str:
        lines = ["mesh,delta,alpha,reject_rate"]
        for m in self.meshes:
            for dl in self.deltas:
                for a in self.alphas:
                    lines.append(f"{m},{dl!r},{a!r},{self.reject[m][dl][a]!r}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = []
        for a in self.alphas:
            header = ["mesh"] + [f"d={dl:g}" for dl in self.deltas]
            rows = [[m] + [self.reject[m][dl][a] for dl in self.deltas] for m in self.meshes]
            out.append(f"alpha={a:g} n={self.design['n']} reps={self.reps} B={self.B}\n" + _fmt_table(header, rows))
        return "\n".join(out)

    def as_dict(self) -> dict:
        return asdict(self)


def run_power(design: SimDesign, deltas=(0.0, 0.1, 0.2, 0.3), meshes=("brain_d1",), alphas=None, reps=None,
              B: int = 1000, variant: str = BASIC, cfg: FitConfig = FitConfig(), threads: int = 1) -> PowerTable:
    """Rejection rate of ``H0: mu1 = mu2`` (band for the difference excludes zero somewhere).

    Replicate ``r`` uses the same data stream for every ``delta``, so rates
    are compared under common random numbers.
    """
    alphas = tuple(design.alphas if alphas is None else alphas)
    reps = design.reps if reps is None else int(reps)
    grid = design.pixel_grid()
    area = design.domain_mesh().area
    table = PowerTable(asdict_design(design), list(meshes), [float(d) for d in deltas], list(alphas),
                       reps=reps, B=B, variant=variant)
    for mname in meshes:
        sys_mu, sys_eta = systems_for(load_fixture(mname), None, cfg)
        table.reject[mname] = {}
        for dl in deltas:
            des = design.with_(delta=float(dl))

            def one(rep):
                g1, g2 = generate_stack(des, rep_stream(design.seed, rep, DATA), grid)
                a1 = analyze(ImageStack(grid.coords, g1.Y), sys_mu, sys_eta, cfg, domain_area=area)
                a2 = analyze(ImageStack(grid.coords, g2.Y), sys_mu, sys_eta, cfg, domain_area=area)
                ctx = TwoSampleContext(a1.fit, a1.model, a2.fit, a2.model)
                bands = scc_two_multi(ctx, alphas, B, stream_int(rep_stream(design.seed, rep, QUANT)), variant)
                return [bands[a].excludes_zero() for a in alphas]

            res = np.array(pmap(one, range(reps), threads))
            table.reject[mname][float(dl)] = {a: float(res[:, i].mean()) for i, a in enumerate(alphas)}
    return table


# ---------------------------------------------------------------------- detection


@dataclass
class DetectionTable:
    design: dict
    methods: list
    metrics: dict = field(default_factory=dict)  # method -> metric -> mean
    reps: int = 0

    def to_csv(self) -> str:
        keys = ["fpr", "fnr", "fdr", "fpr_neg", "fnr_pos"]
        lines = ["method," + ",".join(keys)]
        for m in self.methods:
            lines.append(m + "," + ",".join(repr(self.metrics[m][k]) for k in keys))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = ["criterion"] + self.methods
        rows = []
        for k, label in (("fpr", "FPR"), ("fnr", "FNR"), ("fdr", "FDR"), ("fpr_neg", "FP/neg"), ("fnr_pos", "FN/pos")):
            rows.append([label] + [f"{self.metrics[m][k]:.4f}" for m in self.methods])
        return f"detection: n={self.design['n']} reps={self.reps}\n" + _fmt_table(header, rows)

    def as_dict(self) -> dict:
        return asdict(self)


def run_detection(design: SimDesign, mesh: str = "brain_d1", alpha: float = 0.05, thresholds=(0.10, 0.05, 0.01),
                  reps=None, B: int = 1000, n_flip: int = 100, variant: str = BASIC, cfg: FitConfig = FitConfig(),
                  threads: int = 1) -> DetectionTable:
    """Compare Bonferroni, cluster-threshold and SCC discoveries against the true support."""
    reps = design.reps if reps is None else int(reps)
    grid = design.pixel_grid()
    area = design.domain_mesh().area
    sys_mu, sys_eta = systems_for(load_fixture(mesh), None, cfg)
    methods = ["Bonferroni"] + [f"Cluster({t:g})" for t in thresholds] + ["SCC"]
    table = DetectionTable(asdict_design(design), methods, reps=reps)

    def one(rep):
        sim = generate_stack(design, rep_stream(design.seed, rep, DATA), grid)
        truth = sim.mu != 0
        out = {"Bonferroni": detection_metrics(bonferroni(sim.Y, alpha), truth)}
        aux = stream_int(rep_stream(design.seed, rep, AUX))
        for t in thresholds:
            out[f"Cluster({t:g})"] = detection_metrics(cluster_threshold(sim.Y, grid, t, n_flip, aux), truth)
        an = analyze(ImageStack(grid.coords, sim.Y), sys_mu, sys_eta, cfg, domain_area=area)
        band = scc_one_multi(an.fit, an.model, (alpha,), B, stream_int(rep_stream(design.seed, rep, QUANT)), variant)[alpha]
        out["SCC"] = detection_metrics(scc_discoveries(band), truth)
        return out

    res = pmap(one, range(reps), threads)
    for m in methods:
        table.metrics[m] = {k: float(np.mean([r[m].as_dict()[k] for r in res]))
                            for k in ("fpr", "fnr", "fdr", "fpr_neg", "fnr_pos")}
    return table
