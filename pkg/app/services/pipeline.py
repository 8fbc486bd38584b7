# app/services/pipeline.py
"""
Stage orchestration: Phase I, adaptive training, MFSS estimation, the HF-only baselines and
the report. Every stage reads and writes artifacts under output_dir and appends its
evaluation counts to the cost ledger.
"""
import math
import time
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import (
    AdaptiveTrainingError,
    ArtifactMismatchError,
    ArtifactMissingError,
    ConfigError,
    HFNonconvergenceError,
    SampleEvaluationError,
)
from app.core.ledger import CostLedger
from app.core.logging import logger
from app.core.models import (
    AllocationPlan,
    EstimatorReport,
    ExceedanceCurve,
    LimitStateEstimate,
    RunConfig,
    StratumEstimate,
)
from app.core.parallel import map_samples
from app.core.rng import derived_seed, stream
from app.services.dynamics import StructuralModel, integrate, quantity_of_interest
from app.services.estimators import (
    ConsequenceMeasure,
    budget_allocation,
    consequence,
    convergence_loop,
    equivalent_counts,
    exceedance_curve,
    gss_estimate,
    mc_estimate,
    mfmc_stratum_estimate,
    mfss_aggregate,
    optimal_ratio,
    speedup,
    stratum_a,
    stratum_variance,
)
from app.services.excitation import SpectralLoadModel, phases_for_sample, synthesize
from app.services.reduction import reduced_space_from
from app.services.reporter import ReportWriter
from app.services.strata import MIN_TAIL_COUNT, Phase1Result, Stratification, SVEvaluator, build_strata, phase1_sample
from app.services.surrogate import (
    SurrogateModel,
    TrainingSet,
    adaptive_train,
    kfold_cv,
    train,
)

LF_BATCH = 256

class RunPaths:
    """Artifact locations inside one output directory"""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.phase1 = self.root / "phase1.json"
        self.sv_values = self.root / "sv_values.npy"
        self.strata_train = self.root / "strata_train.json"
        self.surrogate = self.root / "surrogate.pt"
        self.convergence = self.root / "convergence.csv"
        self.strata_estimate = self.root / "strata_estimate.json"
        self.estimate_report = self.root / "estimate_report.json"
        self.trajectory = self.root / "trajectory.csv"
        self.baseline_report = self.root / "baseline_report.json"
        self.oracle = self.root / "oracle.json"
        self.oracle_qoi = self.root / "oracle_qoi.csv"
        self.training_selection = self.root / "training_selection.csv"
        self.curves_plot = self.root / "curves.png"
        self.ledger = self.root / "ledger.jsonl"
        self.responses = self.root / "responses"

class HFSample(NamedTuple):
    index: int
    qoi: np.ndarray
    load: Optional[np.ndarray] = None
    response: Optional[np.ndarray] = None

class HFEvaluator:
    """Picklable HF evaluation of one sample: synthesize, integrate, extract peaks"""

    def __init__(self, structure: StructuralModel, load_model: SpectralLoadModel, channels: Sequence[int],
                 dump_dir: Optional[Path] = None):
        self.structure = structure
        self.load_model = load_model
        self.channels = list(channels)
        self.dump_dir = dump_dir

    def __call__(self, seed: int, substream: str, full: bool, index: int) -> HFSample:
        theta = phases_for_sample(seed, index, self.load_model, substream)
        realization = synthesize(self.load_model, theta)
        record = integrate(self.structure, realization)
        displacements = record.displacements
        qoi = quantity_of_interest(record, self.channels).values
        if self.dump_dir is not None:
            record.to_csv(self.dump_dir / f"{substream}_{index}.csv")
        if not full:
            return HFSample(index, qoi)
        load = realization.on_grid(record.dt_record, displacements.shape[1])
        return HFSample(index, qoi, load, displacements)

def _hf_task(evaluator: HFEvaluator, seed: int, substream: str, full: bool, index: int) -> HFSample:
    try:
        return evaluator(seed, substream, full, index)
    except HFNonconvergenceError as e:
        raise e.with_sample(index) from e
    except SampleEvaluationError:
        raise
    except Exception as e:
        raise SampleEvaluationError(index, str(e)) from e

class Pipeline:
    """
    One run configuration bound to its output directory.

    Args:
        config: Validated run configuration
        n_workers: Worker processes for sample evaluations (CLI > config > environment)
        force: Accept upstream artifacts produced under another config hash
        output_dir: Override of config.output_dir
        dump_responses: Write every HF response to CSV (verbose runs)
    """

    def __init__(self, config: RunConfig, n_workers: Optional[int] = None, force: bool = False,
                 output_dir: Optional[str] = None, dump_responses: bool = False):
        self.config = config
        self.n_workers = n_workers or config.n_workers or settings.N_WORKERS
        self.force = force
        self.paths = RunPaths(Path(output_dir or config.output_dir))
        self.paths.root.mkdir(parents=True, exist_ok=True)
        self.load_model = SpectralLoadModel.from_config(config.excitation)
        self.structure = StructuralModel.from_config(config.structure, config.sv.n_modes)
        self.ledger = CostLedger(self.paths.ledger)
        self.measure = ConsequenceMeasure(config.consequence.kind, config.consequence.bandwidth)
        self.channels = sorted({ls.channel for ls in config.limit_states} | {c.channel for c in config.curves})
        dump_dir = None
        if dump_responses:
            dump_dir = self.paths.responses
            dump_dir.mkdir(parents=True, exist_ok=True)
        self.hf = HFEvaluator(self.structure, self.load_model, self.channels, dump_dir)

    @property
    def seed(self) -> int:
        return self.config.seed

    def column(self, channel: int) -> int:
        return self.channels.index(channel)

    # Evaluation runners

    def run_hf(self, indices: Sequence[int], substream: str, stage: str, run: int, purpose: str,
               full: bool = False) -> List[HFSample]:
        """HF evaluations of sample indices, recorded in the ledger as one batch"""
        indices = [int(i) for i in indices]
        if not indices:
            return []
        start = time.perf_counter()
        samples = map_samples(partial(_hf_task, self.hf, self.seed, substream, full), indices, self.n_workers)
        wall = time.perf_counter() - start
        self.ledger.record(stage, run, "hf", purpose, len(indices), self.config.costs.c_hf, wall,
                           self.config.stage_hash(_hash_stage(stage)))
        logger.debug(f"HF batch of {len(indices)} ({purpose}) took {wall:.2f} s")
        return samples

    def run_lf(self, surrogate: SurrogateModel, indices: Sequence[int], substream: str, stage: str,
               run: int, purpose: str) -> np.ndarray:
        """Surrogate peaks (len(indices) x channels), recorded in the ledger as one batch"""
        indices = [int(i) for i in indices]
        if not indices:
            return np.zeros((0, len(self.channels)))
        start = time.perf_counter()
        peaks = []
        for lo in range(0, len(indices), LF_BATCH):
            loads = []
            for index in indices[lo:lo + LF_BATCH]:
                realization = synthesize(self.load_model, phases_for_sample(self.seed, index, self.load_model, substream))
                loads.append(realization.on_grid(surrogate.record_dt, surrogate.original_len))
            for y in surrogate.predict_many(loads):
                peaks.append(np.max(np.abs(y[self.channels, :]), axis=1))
        wall = time.perf_counter() - start
        self.ledger.record(stage, run, "lf", purpose, len(indices), self.config.costs.c_lf, wall,
                           self.config.stage_hash(_hash_stage(stage)))
        return np.vstack(peaks)

    # Artifact loading

    def _load_phase1(self, strata_path: Optional[Path] = None, hash_stage: str = "phase1") -> Tuple[Phase1Result, Stratification]:
        phase1 = Phase1Result.load(self.paths.sv_values, self.seed)
        strat = Stratification.load(strata_path or self.paths.phase1, phase1,
                                    self.config.stage_hash(hash_stage), self.force)
        return phase1, strat

    def _load_surrogate(self) -> SurrogateModel:
        surrogate = SurrogateModel.load(self.paths.surrogate)
        expected = self.config.stage_hash("train")
        found = surrogate.provenance.get("config_hash", "")
        if found != expected:
            if not self.force:
                raise ArtifactMismatchError(str(self.paths.surrogate), expected, found)
            logger.warning(f"Using {self.paths.surrogate} despite a config hash mismatch (--force)")
        return surrogate

    # Stages

    def phase1(self) -> str:
        """Evaluate the SV over Phase I, build the strata, return the stratification table"""
        cfg = self.config.stratification
        if cfg.n_strata > 1 and cfg.tail_exceedance * cfg.n_mc < MIN_TAIL_COUNT:
            needed = int(math.ceil(MIN_TAIL_COUNT / cfg.tail_exceedance))
            raise ConfigError(
                f"n_mc = {cfg.n_mc} puts {cfg.tail_exceedance * cfg.n_mc:.0f} samples in the last stratum; "
                f"a 10% COV at exceedance {cfg.tail_exceedance} needs at least {MIN_TAIL_COUNT} "
                f"(n_mc >= {needed}, i.e. 10^(m+2) samples for a 10^-m tail)")
        config_hash = self.config.stage_hash("phase1")
        run = self.ledger.begin_run("phase1", config_hash)
        logger.info(f"Phase I started: {cfg.n_mc} samples, {cfg.n_strata} strata")

        start = time.perf_counter()
        phase1 = phase1_sample(SVEvaluator(self.structure, self.load_model), cfg.n_mc, self.seed, self.n_workers)
        self.ledger.record("phase1", run, "sv", "phase1", cfg.n_mc, self.config.costs.c_sv,
                           time.perf_counter() - start, config_hash)

        strat = build_strata(phase1, cfg.n_strata, cfg.tail_exceedance, cfg.boundary_rule,
                             cfg.explicit_boundaries, cfg.domain_lower_bound)
        strat.config_hash = config_hash
        phase1.save(self.paths.sv_values)
        strat.save(self.paths.phase1)
        logger.info(f"Phase I finished: artifacts in {self.paths.root}")
        return ReportWriter.strata_table(strat.summary_frame())

    def _reduced_space(self, data: TrainingSet):
        red = self.config.reduction
        return reduced_space_from(data.inputs, data.outputs, red.eta, red.snapshots_per_sample,
                                  red.wavelet_family, red.wavelet_level, red.padding)

    def _cv(self, data: TrainingSet):
        space = self._reduced_space(data)
        record_dt = self.config.structure.solver.record_dt
        training = self.config.training

        def factory(inputs, outputs):
            seed = derived_seed(self.seed, "net-init", len(inputs))
            return train(inputs, outputs, space, training, seed, record_dt).predict_many

        return kfold_cv(data.inputs, data.outputs, self.config.adaptive.folds, space.basis, factory, self.seed)

    def _fit(self, data: TrainingSet) -> SurrogateModel:
        space = self._reduced_space(data)
        return train(data.inputs, data.outputs, space, self.config.training,
                     derived_seed(self.seed, "net-init", len(data)),
                     self.config.structure.solver.record_dt,
                     provenance={"train_indices": list(data.indices), "train_strata": list(data.strata)})

    def train(self) -> List[Dict[str, Any]]:
        """Adaptive surrogate training; returns the correlation trajectory"""
        _, strat = self._load_phase1()
        config_hash = self.config.stage_hash("train")
        run = self.ledger.begin_run("train", config_hash)
        logger.info("Adaptive training started")

        def hf_runner(indices: List[int]):
            samples = self.run_hf(indices, "phase1", "train", run, "train", full=True)
            return [(s.load, s.response) for s in samples]

        try:
            result = adaptive_train(strat, hf_runner, self.config.adaptive, self.seed, self._cv, self._fit)
        except AdaptiveTrainingError as e:
            ReportWriter.write_rows(e.trajectory, self.paths.convergence)
            raise

        model = result.model
        model.provenance.update({
            "config_hash": config_hash,
            "rho_bar": result.report.rho_bar,
            "delta": result.report.delta,
            "per_mode_rho": [None if np.isnan(r) else float(r) for r in result.report.per_mode],
            "n_train": result.n_train,
            "trajectory": result.trajectory,
        })
        model.save(self.paths.surrogate)
        strat.config_hash = config_hash
        strat.save(self.paths.strata_train)
        ReportWriter.write_rows(result.trajectory, self.paths.convergence)
        logger.info(f"Adaptive training finished: N_train = {result.n_train} per stratum, "
                    f"rho_bar = {result.report.rho_bar:.4f}")
        return result.trajectory

    def estimate(self) -> EstimatorReport:
        """MFSS estimate of every limit state with the trained surrogate"""
        _, strat = self._load_phase1(self.paths.strata_train, "train")
        surrogate = self._load_surrogate()
        config_hash = self.config.stage_hash("estimate")
        run = self.ledger.begin_run("estimate", config_hash)
        costs, alloc = self.config.costs, self.config.allocation

        rho_bar = float(surrogate.provenance["rho_bar"])
        rho = float(np.clip(rho_bar, -alloc.rho_cap, alloc.rho_cap))
        if rho != rho_bar:
            logger.warning(f"rho = {rho_bar:.6f} capped at {rho:.6f}")
        r_star = optimal_ratio(costs.c_hf, costs.c_lf, rho)
        logger.info(f"MFSS estimation started: rho = {rho:.4f}, r* = {r_star:.2f}")

        evaluator = _StratumEvaluations(self, strat, surrogate, run, r_star)
        trajectory: List[Dict[str, Any]] = []
        if alloc.mode == "fixed":
            n_hf, _ = budget_allocation(alloc.budget, costs.c_hf, costs.c_lf, r_star)
        else:
            def estimate_at(n: int) -> Dict[str, float]:
                return {ls.name: evaluator.mfss(n, ls.channel, ls.threshold, rho).estimate_raw
                        for ls in self.config.limit_states}
            result = convergence_loop(estimate_at, alloc.beta_target, alloc.start, alloc.step, alloc.max_iterations)
            n_hf, trajectory = result.n_hf, result.trajectory
        n_lf = evaluator.n_lf_for(n_hf)
        evaluator.ensure(n_hf)

        limit_states = []
        for ls in self.config.limit_states:
            agg = evaluator.mfss(n_hf, ls.channel, ls.threshold, rho)
            limit_states.append(LimitStateEstimate(
                name=ls.name, channel=ls.channel, threshold=ls.threshold, method="MFSS",
                estimate_raw=agg.estimate_raw, estimate=agg.estimate, variance=agg.variance,
                cov=agg.cov, strata=agg.strata,
            ))

        curves: List[ExceedanceCurve] = []
        for curve in self.config.curves:
            mf = [evaluator.mfss(n_hf, curve.channel, z, rho) for z in curve.thresholds]
            curves.append(exceedance_curve(curve.channel, "MFSS", curve.thresholds,
                                           [m.estimate for m in mf], [m.cov for m in mf]))
            lf = [evaluator.gss_lf(n_lf, curve.channel, z) for z in curve.thresholds]
            curves.append(exceedance_curve(curve.channel, "GSS-LF", curve.thresholds,
                                           [g.estimate for g in lf], [g.cov for g in lf]))

        n_strata = strat.n_strata
        n_train = self.ledger.count("hf", "train", stage="train") // n_strata
        n_hf_eval = self.ledger.count("hf", "eval", stage="estimate") // n_strata
        n_lf_eval = self.ledger.count("lf", "eval", stage="estimate") // n_strata
        counts = equivalent_counts(n_hf_eval, r_star, rho, n_strata)
        sp = speedup(counts.n_gss, n_hf_eval, n_train, n_lf_eval, costs.ratio)

        evaluated = [len(strat.drawn_train[k]) + min(n_hf, len(strat.drawn_eval[k])) for k in range(n_strata)]
        flags = [f"curve_not_monotone:{c.method}:{c.channel}" for c in curves if not c.monotone]
        flags += [f"estimate_floored:{ls.name}" for ls in limit_states if ls.estimate_raw < 0]
        report = EstimatorReport(
            version=settings.ARTIFACT_VERSION,
            config_hash=config_hash,
            method="MFSS",
            limit_states=limit_states,
            allocation=AllocationPlan(rho=rho, c_hf=costs.c_hf, c_lf=costs.c_lf, r_star=r_star,
                                      n_hf=n_hf, n_lf=n_lf, budget=alloc.budget),
            n_train=n_train,
            n_gss=counts.n_gss,
            n_gss_raw=counts.n_gss_raw,
            n_sim=counts.n_sim,
            n_sim_raw=counts.n_sim_raw,
            speedup=sp,
            ledger_totals=self.ledger.totals("estimate"),
            curves=curves,
            flags=flags,
            extra={"rho_bar": rho_bar, "nu_k": strat.nu_k(evaluated).tolist(),
                   "allocation_mode": alloc.mode},
        )
        strat.config_hash = config_hash
        strat.save(self.paths.strata_estimate)
        ReportWriter.write_json(report, self.paths.estimate_report)
        if trajectory:
            ReportWriter.write_rows(trajectory, self.paths.trajectory)
        if curves:
            ReportWriter.write_curves(curves, self.paths.root)
        logger.info(f"MFSS estimation finished: N_HF = {n_hf}, N_LF = {n_lf} per stratum, speedup {sp:.2f}")
        return report

    def baseline_gss(self, per_stratum: Optional[int] = None) -> EstimatorReport:
        """HF-only stratified estimate with a fixed number of samples per stratum"""
        _, strat = self._load_phase1()
        config_hash = self.config.stage_hash("baseline")
        run = self.ledger.begin_run("baseline", config_hash)
        n = per_stratum or self.config.baseline.n_per_stratum
        logger.info(f"Baseline GSS started: {n} HF samples per stratum")

        draws = [strat.draw(k, n, "eval", stream(self.seed, "baseline-draw", k)) for k in range(strat.n_strata)]
        flat = [i for d in draws for i in d]
        samples = self.run_hf(flat, "phase1", "baseline", run, "baseline")
        qoi = {s.index: s.qoi for s in samples}

        def gss_at(channel: int, threshold: float):
            col = self.column(channel)
            h = [consequence([qoi[i][col] for i in d], threshold, self.measure) for d in draws]
            return gss_estimate(h, strat.probabilities)

        limit_states = []
        for ls in self.config.limit_states:
            res = gss_at(ls.channel, ls.threshold)
            limit_states.append(LimitStateEstimate(
                name=ls.name, channel=ls.channel, threshold=ls.threshold, method="GSS",
                estimate_raw=res.estimate, estimate=res.estimate, variance=res.variance, cov=res.cov,
                strata=[StratumEstimate(stratum=k, probability=float(p), n_hf=n, estimate=m,
                                        estimate_clamped=m, variance=v / n)
                        for k, (p, m, v) in enumerate(zip(strat.probabilities, res.stratum_means,
                                                          res.stratum_variances))],
            ))
        curves = []
        for curve in self.config.curves:
            results = [gss_at(curve.channel, z) for z in curve.thresholds]
            curves.append(exceedance_curve(curve.channel, "GSS-HF", curve.thresholds,
                                           [r.estimate for r in results], [r.cov for r in results]))
        report = EstimatorReport(
            version=settings.ARTIFACT_VERSION,
            config_hash=config_hash,
            method="GSS",
            limit_states=limit_states,
            n_gss=n,
            n_sim=n * strat.n_strata,
            ledger_totals=self.ledger.totals("baseline"),
            curves=curves,
            flags=[f"curve_not_monotone:{c.method}:{c.channel}" for c in curves if not c.monotone],
        )
        ReportWriter.write_json(report, self.paths.baseline_report)
        logger.info("Baseline GSS finished")
        return report

    def oracle_mc(self, n_samples: Optional[int] = None) -> EstimatorReport:
        """Brute-force HF Monte Carlo reference with empirical QoI quantiles"""
        n = n_samples or self.config.oracle.n_samples
        config_hash = self.config.stage_hash("oracle")
        run = self.ledger.begin_run("oracle", config_hash)
        logger.info(f"Oracle MC started: {n} HF samples")
        samples = self.run_hf(range(n), "oracle", "oracle", run, "oracle")
        qoi = np.vstack([s.qoi for s in samples])

        limit_states = []
        for ls in self.config.limit_states:
            res = mc_estimate(consequence(qoi[:, self.column(ls.channel)], ls.threshold, self.measure))
            limit_states.append(LimitStateEstimate(
                name=ls.name, channel=ls.channel, threshold=ls.threshold, method="MC",
                estimate_raw=res.estimate, estimate=res.estimate, variance=res.variance, cov=res.cov,
            ))
        quantiles = {
            str(c): {str(q): float(np.quantile(qoi[:, self.column(c)], q)) for q in self.config.oracle.quantiles}
            for c in self.channels
        }
        binomial_se = {ls.name: math.sqrt(max(ls.estimate * (1 - ls.estimate), 0.0) / n) for ls in limit_states}
        report = EstimatorReport(
            version=settings.ARTIFACT_VERSION,
            config_hash=config_hash,
            method="MC",
            limit_states=limit_states,
            n_sim=n,
            ledger_totals=self.ledger.totals("oracle"),
            extra={"quantiles": quantiles, "binomial_standard_error": binomial_se},
        )
        ReportWriter.write_json(report, self.paths.oracle)
        frame = pd.DataFrame(qoi, columns=[f"channel_{c}" for c in self.channels])
        frame.insert(0, "sample", np.arange(n))
        frame.to_csv(self.paths.oracle_qoi, index=False)
        logger.info("Oracle MC finished")
        return report

    def report(self, plot: bool = False) -> Tuple[str, List[str]]:
        """Comparison table, cost-ledger report and curve files from the stored reports"""
        estimate = ReportWriter.read_json(self.paths.estimate_report)
        baseline = ReportWriter.read_json(self.paths.baseline_report)
        oracle = ReportWriter.read_json(self.paths.oracle)
        reports = [r for r in (baseline, estimate, oracle) if r is not None]
        if not reports:
            raise ArtifactMissingError(str(self.paths.estimate_report))

        sections = [ReportWriter.comparison_table(reports)]
        cost_text, flags = ReportWriter.cost_report(self.ledger)
        sections.append(cost_text)
        verification = self.ledger.verify()
        if not verification["valid"]:
            flags.append("ledger_chain_invalid")
            logger.warning(f"Ledger chain broken at {len(verification['invalid_entries'])} entries")
        if estimate is not None and estimate.allocation is not None:
            recomputed = self.recompute_speedup(estimate)
            sections.append(f"Speedup {estimate.speedup:.4f} (ledger recomputation {recomputed:.4f})")
            if not math.isclose(recomputed, estimate.speedup, rel_tol=1e-12):
                flags.append("speedup_ledger_mismatch")
        for r in reports:
            flags.extend(r.flags)

        curves = [c for r in reports for c in r.curves]
        if curves:
            ReportWriter.write_curves(curves, self.paths.root)
            if plot:
                ReportWriter.plot_curves(curves, self.paths.curves_plot)
        return "\n\n".join(sections), flags

    def recompute_speedup(self, estimate: EstimatorReport) -> float:
        """Speedup from the latest train and estimate ledger runs"""
        n_strata = self.config.stratification.n_strata
        plan = estimate.allocation
        n_train = self.ledger.count("hf", "train", stage="train") // n_strata
        n_hf = self.ledger.count("hf", "eval", stage="estimate") // n_strata
        n_lf = self.ledger.count("lf", "eval", stage="estimate") // n_strata
        counts = equivalent_counts(n_hf, plan.r_star, plan.rho, n_strata)
        return speedup(counts.n_gss, n_hf, n_train, n_lf, plan.c_hf / plan.c_lf)

    def training_selection(self, sizes: Optional[Sequence[int]] = None) -> List[Dict[str, Any]]:
        """Cross-validated correlation for stratified vs plain random training sets of equal size"""
        phase1, strat = self._load_phase1()
        run = self.ledger.begin_run("experiment", self.config.stage_hash("train"))
        n_strata = strat.n_strata
        adaptive = self.config.adaptive
        if not sizes:
            sizes = [n_strata * (adaptive.n_init + step * adaptive.n_add) for step in range(0, 5, 2)]
        sizes = sorted(int(s) for s in sizes)
        per_stratum = math.ceil(sizes[-1] / n_strata)

        stratified = [strat.draw(k, per_stratum, "train", stream(self.seed, "experiment", 0, k))
                      for k in range(n_strata)]
        rng = stream(self.seed, "experiment", 1)
        plain = rng.choice(phase1.n_samples, size=sizes[-1], replace=False).tolist()

        wanted = sorted({i for d in stratified for i in d} | set(plain))
        samples = {s.index: s for s in self.run_hf(wanted, "phase1", "experiment", run, "experiment", full=True)}

        rows = []
        for size in sizes:
            take = size // n_strata
            selections = {
                "GSS": [i for d in stratified for i in d[:take]],
                "MC": plain[:size],
            }
            for method, chosen in selections.items():
                data = TrainingSet()
                for i in chosen:
                    data.extend(0, [i], [(samples[i].load, samples[i].response)])
                report = self._cv(data)
                rows.append({"size": len(chosen), "method": method,
                             "rho_bar": report.rho_bar, "delta": report.delta})
                logger.info(f"Training selection {method} n={len(chosen)}: rho_bar = {report.rho_bar:.4f}")
        ReportWriter.write_rows(rows, self.paths.training_selection)
        return rows

class _StratumEvaluations:
    """
    Ordered eval draws per stratum with cached HF and LF peaks.

    HF runs on the first N_HF entries of a stratum's list and LF on the first N_LF, so the
    paired LF evaluations are always the HF samples.
    """

    def __init__(self, pipeline: Pipeline, strat: Stratification, surrogate: SurrogateModel,
                 run: int, r_star: float):
        self.pipeline = pipeline
        self.strat = strat
        self.surrogate = surrogate
        self.run = run
        self.r_star = r_star
        self.lists: List[List[int]] = [[] for _ in range(strat.n_strata)]
        self.hf: Dict[int, np.ndarray] = {}
        self.lf: Dict[int, np.ndarray] = {}

    def n_lf_for(self, n_hf: int) -> int:
        return max(n_hf, int(math.floor(self.r_star * n_hf + 0.5)))

    def ensure(self, n_hf: int) -> None:
        n_lf = self.n_lf_for(n_hf)
        seed = self.pipeline.seed
        for k, order in enumerate(self.lists):
            missing = n_lf - len(order)
            if missing > 0:
                order.extend(self.strat.draw(k, missing, "eval", stream(seed, "eval-draw", k, len(order))))
        need_hf = [i for order in self.lists for i in order[:n_hf] if i not in self.hf]
        for s in self.pipeline.run_hf(need_hf, "phase1", "estimate", self.run, "eval"):
            self.hf[s.index] = s.qoi
        need_lf = [i for order in self.lists for i in order[:n_lf] if i not in self.lf]
        peaks = self.pipeline.run_lf(self.surrogate, need_lf, "phase1", "estimate", self.run, "eval")
        for i, row in zip(need_lf, peaks):
            self.lf[i] = row

    def mfss(self, n_hf: int, channel: int, threshold: float, rho: float):
        self.ensure(n_hf)
        n_lf = self.n_lf_for(n_hf)
        col = self.pipeline.column(channel)
        measure = self.pipeline.measure
        estimates, variances, strata = [], [], []
        for k, order in enumerate(self.lists):
            hf_idx, lf_idx = order[:n_hf], order[:n_lf]
            hf_h = consequence([self.hf[i][col] for i in hf_idx], threshold, measure)
            lf_all = consequence([self.lf[i][col] for i in lf_idx], threshold, measure)
            lf_paired = lf_all[:n_hf]
            a = stratum_a(rho, hf_h, lf_paired)
            est = mfmc_stratum_estimate(hf_h, lf_paired, lf_all, a, hf_idx, lf_idx[:n_hf])
            var = stratum_variance(hf_h, self.r_star, rho, a)
            estimates.append(est.raw)
            variances.append(var)
            strata.append(StratumEstimate(stratum=k, probability=float(self.strat.probabilities[k]),
                                          n_hf=n_hf, n_lf=n_lf, estimate=est.raw,
                                          estimate_clamped=est.clamped, variance=var, a=a))
        agg = mfss_aggregate(estimates, variances, self.strat.probabilities)
        return _MFSSResult(agg.estimate_raw, agg.estimate, agg.variance, agg.cov, strata)

    def gss_lf(self, n_lf: int, channel: int, threshold: float):
        col = self.pipeline.column(channel)
        h = [consequence([self.lf[i][col] for i in order[:n_lf]], threshold, self.pipeline.measure)
             for order in self.lists]
        return gss_estimate(h, self.strat.probabilities)

class _MFSSResult(NamedTuple):
    estimate_raw: float
    estimate: float
    variance: float
    cov: Optional[float]
    strata: List[StratumEstimate]

def _hash_stage(stage: str) -> str:
    """Config-hash stage used for a ledger stage"""
    return {"experiment": "train"}.get(stage, stage)
