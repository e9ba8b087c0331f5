import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, Iterator

import yaml

from core.engine import StudyEngine
from core.exceptions import StudyExecutionError
from core.models import ExecutionPlan, Study

logger = logging.getLogger(__name__)


class PlanExecutionEngine:
    """Runs the studies of a plan sequentially, on a thread pool, or on the event loop's executor.

    Every study writes its tables under ``out_dir/<study name>``. A study that
    fails to load or stops at a failed step yields a ``study_error`` event;
    the remaining studies still run.
    """

    def __init__(self, out_dir: Path, max_workers: int = 4):
        self.out_dir = out_dir
        self.max_workers = max_workers
        self.study_engine = StudyEngine()

    def load_plan(self, plan_file: Path) -> ExecutionPlan:
        with open(plan_file, "r") as f:
            data = yaml.safe_load(f)

        # study files are relative to the plan
        data["study_files"] = [plan_file.parent / study_file for study_file in data.get("study_files", [])]
        return ExecutionPlan(**data)

    def run_plan(self, plan: ExecutionPlan) -> Iterator[Dict[str, Any]]:
        yield {"type": "plan_start", "name": plan.name, "mode": plan.mode, "total_studies": len(plan.study_files)}
        runners = {"sequential": self._run_sequential, "parallel": self._run_parallel, "async": self._run_async}
        failed = 0
        for event in runners[plan.mode](plan):
            failed += event["type"] == "study_error"
            yield event
        yield {"type": "plan_complete", "status": "completed" if failed == 0 else "completed_with_errors",
               "failed_studies": failed}

    def _study_dir(self, study: Study) -> Path:
        return self.out_dir / study.name.lower().replace(" ", "_")

    def _run_sequential(self, plan: ExecutionPlan) -> Iterator[Dict[str, Any]]:
        """Forwards every study event as it happens, tagged with the study's index."""
        for idx, study_file in enumerate(plan.study_files, 1):
            yield {"type": "study_file_start", "index": idx, "file": str(study_file)}
            try:
                study = self.study_engine.load_study(study_file)
                yield {"type": "study_loaded", "study_name": study.name}
                for event in self.study_engine.run_study(study, self._study_dir(study)):
                    event["study_index"] = idx
                    event["study_file"] = str(study_file)
                    yield event
            except Exception as e:
                logger.error("Study %s failed: %s", study_file, e)
                yield _error_event(idx, study_file, e)

    def _run_parallel(self, plan: ExecutionPlan) -> Iterator[Dict[str, Any]]:
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {
                executor.submit(self._collect_study, idx, study_file): (idx, study_file)
                for idx, study_file in enumerate(plan.study_files, 1)
            }
            for future in as_completed(futures):
                idx, study_file = futures[future]
                try:
                    yield _complete_event(future.result())
                except Exception as e:
                    logger.error("Study %s failed: %s", study_file, e)
                    yield _error_event(idx, study_file, e)

    async def _gather_studies(self, plan: ExecutionPlan) -> list:
        loop = asyncio.get_running_loop()
        tasks = [
            loop.run_in_executor(None, self._collect_study, idx, study_file)
            for idx, study_file in enumerate(plan.study_files, 1)
        ]
        return await asyncio.gather(*tasks, return_exceptions=True)

    def _run_async(self, plan: ExecutionPlan) -> Iterator[Dict[str, Any]]:
        outcomes = asyncio.run(self._gather_studies(plan))
        for idx, (study_file, outcome) in enumerate(zip(plan.study_files, outcomes), 1):
            if isinstance(outcome, Exception):
                logger.error("Study %s failed: %s", study_file, outcome)
                yield _error_event(idx, study_file, outcome)
            else:
                yield _complete_event(outcome)

    def _collect_study(self, index: int, study_file: Path) -> Dict[str, Any]:
        """Loads and runs one study on a worker; raises if either fails."""
        study = self.study_engine.load_study(study_file)
        steps = []
        for event in self.study_engine.run_study(study, self._study_dir(study)):
            if event["type"] == "step_success":
                steps.append({"step": event["step"], "command": event["command"],
                              "output": event["output"], "status": "success"})
            elif event["type"] == "step_failure":
                steps.append({"step": event["step"], "command": event["command"],
                              "status": "failure", "error": event["error"]})

        if any(step["status"] == "failure" for step in steps):
            raise StudyExecutionError(f"Study '{study.name}' stopped at a failed step")
        return {"study_name": study.name, "index": index, "file": str(study_file), "steps": steps}


def _complete_event(results: Dict[str, Any]) -> Dict[str, Any]:
    return {"type": "study_complete", "index": results["index"], "file": results["file"],
            "name": results["study_name"], "results": results}


def _error_event(index: int, study_file: Path, error: Exception) -> Dict[str, Any]:
    return {"type": "study_error", "index": index, "file": str(study_file), "error": str(error)}
