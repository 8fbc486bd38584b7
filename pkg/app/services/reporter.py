# app/services/reporter.py
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import matplotlib
matplotlib.use('Agg')  # Use non-interactive backend
import matplotlib.pyplot as plt
import pandas as pd

from app.core.ledger import CostLedger
from app.core.logging import logger
from app.core.models import EstimatorReport, ExceedanceCurve

# SV evaluations must be at least this many times cheaper than HF integrations
MIN_SV_COST_RATIO = 100.0

class ReportWriter:
    """Service for tables, CSV files, JSON reports and plots"""

    @staticmethod
    def strata_table(summary: pd.DataFrame) -> str:
        """
        Stratification summary: bounds, probability to four decimals and pool size

        Args:
            summary: Frame from Stratification.summary_frame()

        Returns:
            str: Printable table
        """
        lines = [f"{'Stratum':>8} {'Lower':>14} {'Upper':>14} {'P(E^k)':>8} {'N^k_MC':>10}"]
        for row in summary.itertuples(index=False):
            upper = "inf" if row.upper == float("inf") else f"{row.upper:.6g}"
            lines.append(f"{row.stratum:>8d} {row.lower:>14.6g} {upper:>14} "
                         f"{row.probability:>8.4f} {row.count:>10d}")
        lines.append(f"{'Total':>8} {'':>14} {'':>14} {summary['probability'].sum():>8.4f} "
                     f"{int(summary['count'].sum()):>10d}")
        return "\n".join(lines)

    @staticmethod
    def comparison_table(reports: Sequence[EstimatorReport]) -> str:
        """Failure probability and COV of each limit state, one column pair per method"""
        names: List[str] = []
        for report in reports:
            for ls in report.limit_states:
                if ls.name not in names:
                    names.append(ls.name)
        header = f"{'Limit state':<16}" + "".join(f"{r.method + ' H':>14}{r.method + ' COV':>12}" for r in reports)
        lines = [header]
        for name in names:
            cells = []
            for report in reports:
                match = next((ls for ls in report.limit_states if ls.name == name), None)
                if match is None:
                    cells.append(f"{'-':>14}{'-':>12}")
                else:
                    cov = "n/a" if match.cov is None else f"{match.cov:.2%}"
                    cells.append(f"{match.estimate:>14.4e}{cov:>12}")
            lines.append(f"{name:<16}" + "".join(cells))
        return "\n".join(lines)

    @staticmethod
    def cost_report(ledger: CostLedger) -> Tuple[str, List[str]]:
        """
        Measured mean wall time per evaluation kind, with the SV/HF cost check

        Returns:
            Tuple of (printable text, flags)
        """
        flags: List[str] = []
        means = ledger.mean_wall_seconds()
        lines = ["Evaluation kind   mean wall seconds"]
        for kind in sorted(means):
            lines.append(f"{kind:<17} {means[kind]:.6f}")
        if "hf" in means and "sv" in means and means["sv"] > 0:
            ratio = means["hf"] / means["sv"]
            lines.append(f"HF/SV cost ratio  {ratio:.1f}")
            if ratio < MIN_SV_COST_RATIO:
                flags.append(f"sv_cost_ratio_below_{int(MIN_SV_COST_RATIO)}")
                logger.warning(f"SV evaluations are only {ratio:.1f}x cheaper than HF integrations")
        totals = ledger.totals()
        for key, count in totals.items():
            lines.append(f"{key:<17} {count}")
        return "\n".join(lines), flags

    @staticmethod
    def write_json(report: EstimatorReport, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(report.to_json() + "\n")

    @staticmethod
    def read_json(path: Union[str, Path]) -> Optional[EstimatorReport]:
        path = Path(path)
        if not path.exists():
            return None
        return EstimatorReport.parse_file(path)

    @staticmethod
    def write_rows(rows: List[Dict[str, Any]], path: Union[str, Path]) -> None:
        """List of flat dicts to CSV, columns in first-seen order"""
        frame = pd.DataFrame(rows)
        frame.to_csv(path, index=False)

    @staticmethod
    def curves_frame(curves: Sequence[ExceedanceCurve]) -> pd.DataFrame:
        rows = [
            {"method": c.method, "channel": c.channel, "threshold": p.threshold,
             "probability": p.probability, "cov": p.cov, "monotone": c.monotone}
            for c in curves for p in c.points
        ]
        return pd.DataFrame(rows, columns=["method", "channel", "threshold", "probability", "cov", "monotone"])

    @staticmethod
    def write_curves(curves: Sequence[ExceedanceCurve], output_dir: Union[str, Path]) -> List[Path]:
        """One curves_<channel>.csv per monitored channel"""
        output_dir = Path(output_dir)
        frame = ReportWriter.curves_frame(curves)
        written = []
        for channel, group in frame.groupby("channel"):
            path = output_dir / f"curves_{channel}.csv"
            group.to_csv(path, index=False)
            written.append(path)
        return written

    @staticmethod
    def plot_curves(curves: Sequence[ExceedanceCurve], path: Union[str, Path]) -> None:
        """Exceedance probability against threshold on log axes, one line per method and channel"""
        fig, ax = plt.subplots(figsize=(7, 5))
        try:
            for curve in curves:
                points = [(p.threshold, p.probability) for p in curve.points if p.probability > 0]
                if not points:
                    continue
                x, y = zip(*points)
                ax.plot(x, y, marker="o", label=f"{curve.method} (channel {curve.channel})")
            ax.set_xlabel("Threshold (m)")
            ax.set_ylabel("Exceedance probability")
            ax.set_yscale("log")
            ax.grid(True, which="both", alpha=0.3)
            if ax.lines:
                ax.legend()
            fig.tight_layout()
            fig.savefig(path, dpi=120)
        finally:
            plt.close(fig)
