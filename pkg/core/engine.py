import logging
import time
from pathlib import Path

import yaml

from core import reports
from core.exceptions import StudyExecutionError
from core.inputs import load_distribution, load_state
from core.models import Step, Study

logger = logging.getLogger(__name__)

_STATE_ROLES = {"psi", "phi"}


class StudyEngine:
    """Orchestrator of figure-reproduction studies."""

    def __init__(self):
        self.command_map = {
            "rn-cdf": reports.rn_cdf_table,
            "rn-quantile": reports.rn_quantile_table,
            "rn-curve": reports.rn_curve_table,
            "rate": reports.rate_table,
            "rate-curve": reports.rate_curve_table,
            "fidelity": reports.fidelity_table,
            "converge": reports.converge_table,
            "locc-plan": reports.locc_plan_table,
            "locc-clone": reports.locc_clone_table,
        }

    def load_study(self, study_file: Path) -> Study:
        """Load a study YAML file; input paths are resolved relative to it."""
        with open(study_file, "r") as f:
            data = yaml.safe_load(f)

        study_dir = Path(study_file).parent
        for step in data.get("sequence", []):
            step["inputs"] = {role: study_dir / path for role, path in step.get("inputs", {}).items()}
        return Study(**data)

    def run_study(self, study: Study, out_dir: Path):
        """
        Executes all steps of a study, yielding an event for each step.
        A failed step ends the study.
        """
        yield {"type": "study_start", "name": study.name}
        out_dir.mkdir(parents=True, exist_ok=True)

        total_steps = len(study.sequence)
        for i, step in enumerate(study.sequence):
            step_num = i + 1
            yield {"type": "step_start", "step": step_num, "total": total_steps, "command": step.command}

            try:
                start_time = time.time()
                table = self._execute_step(step)
                elapsed_ms = (time.time() - start_time) * 1000
                output = out_dir / (step.output or f"{step_num:02d}_{step.command}.csv")
                output.write_text(table.to_csv())

                yield {
                    "type": "step_success",
                    "step": step_num,
                    "command": step.command,
                    "elapsed_ms": elapsed_ms,
                    "rows": len(table.rows),
                    "output": str(output),
                }

            except Exception as e:
                logger.error(f"Step {step_num} ({step.command}) of '{study.name}' failed: {e}")
                yield {"type": "step_failure", "step": step_num, "command": step.command, "error": str(e)}
                yield {"type": "study_end", "status": "failed"}
                return

        yield {"type": "study_end", "status": "completed"}

    def _execute_step(self, step: Step) -> reports.Table:
        if step.command not in self.command_map:
            raise StudyExecutionError(f"Unknown command: {step.command}")

        loaded = {
            role: load_state(path) if role in _STATE_ROLES else load_distribution(path)
            for role, path in step.inputs.items()
        }
        try:
            return self.command_map[step.command](**loaded, **step.params)
        except TypeError as e:
            raise StudyExecutionError(f"Invalid parameters for {step.command}: {e}") from e
