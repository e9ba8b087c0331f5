import json
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Optional

import typer
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from core import reports
from core.engine import StudyEngine
from core.exceptions import ComputationError, InputError, ResourceLimit, StudyExecutionError
from core.inputs import load_distribution, load_state

# stdout carries the CSV data
console = Console(stderr=True)

EXIT_COMPUTATION = 1
EXIT_INPUT = 2
EXIT_RESOURCE = 3


class ConversionMode(str, Enum):
    maj = "maj"
    det = "det"


class CopyMode(str, Enum):
    exact = "exact"
    asymptotic = "asymptotic"


@contextmanager
def exit_codes():
    """Maps library errors onto the documented exit codes."""
    try:
        yield
    except (InputError, ValidationError, json.JSONDecodeError, yaml.YAMLError, OSError) as e:
        console.print(f"[bold red]Input error:[/bold red] {e}")
        raise typer.Exit(code=EXIT_INPUT)
    except ResourceLimit as e:
        console.print(f"[bold red]Resource limit:[/bold red] {e}")
        raise typer.Exit(code=EXIT_RESOURCE)
    except ComputationError as e:
        console.print(f"[bold red]Computation failed:[/bold red] {e}")
        raise typer.Exit(code=EXIT_COMPUTATION)


def emit(table: reports.Table, output: Optional[Path]) -> None:
    data = table.to_csv()
    if output is None:
        typer.echo(data, nl=False)
    else:
        output.write_text(data)
        console.print(f"Wrote {len(table.rows)} rows to [cyan]{output}[/]")


def _input_file(flag: str, help: str):
    return typer.Option(..., flag, help=help, dir_okay=False)


OutputOption = typer.Option(None, "--output", "-o", dir_okay=False, help="CSV file; standard output when omitted.")


def rn_cdf(
    v: float = typer.Option(..., "--v", help="Parameter v >= 0."),
    mu: float = typer.Option(..., "--mu", help="Argument mu."),
    output: Optional[Path] = OutputOption,
):
    """
    Evaluate the Rayleigh-normal distribution function Z_v(mu).
    """
    with exit_codes():
        emit(reports.rn_cdf_table(v, mu), output)


def rn_quantile(
    v: float = typer.Option(..., "--v", help="Parameter v >= 0."),
    p: float = typer.Option(..., "--p", help="Level in (0, 1)."),
    output: Optional[Path] = OutputOption,
):
    """
    Invert Z_v at level p.
    """
    with exit_codes():
        emit(reports.rn_quantile_table(v, p), output)


def rn_curve(
    v: float = typer.Option(..., "--v", help="Parameter v >= 0."),
    mu_min: float = typer.Option(-4.0, "--mu-min"),
    mu_max: float = typer.Option(4.0, "--mu-max"),
    steps: int = typer.Option(81, "--steps", help="Number of grid points."),
    output: Optional[Path] = OutputOption,
):
    """
    Tabulate Z_v on an equally spaced grid of mu.
    """
    with exit_codes():
        emit(reports.rn_curve_table(v, mu_min, mu_max, steps), output)


def rate(
    P: Path = _input_file("--P", "Source distribution JSON."),
    Q: Path = _input_file("--Q", "Target distribution JSON."),
    nu: float = typer.Option(..., "--nu", help="Required fidelity in (0, 1)."),
    n: int = typer.Option(..., "--n", help="Number of source copies."),
    output: Optional[Path] = OutputOption,
):
    """
    Second-order expansion of the number of target copies obtainable from n source copies.
    """
    with exit_codes():
        emit(reports.rate_table(load_distribution(P), load_distribution(Q), nu, n), output)


def rate_curve(
    P: Optional[Path] = typer.Option(None, "--P", dir_okay=False, help="Source distribution JSON."),
    Q: Optional[Path] = typer.Option(None, "--Q", dir_okay=False, help="Target distribution JSON."),
    c: Optional[float] = typer.Option(None, "--c", help="Constant C, used instead of --P/--Q."),
    d: float = typer.Option(1.0, "--d", help="Constant D, used with --c."),
    nu_steps: int = typer.Option(99, "--nu-steps", help="Number of accuracies in (0, 1)."),
    output: Optional[Path] = OutputOption,
):
    """
    Second-order rate as a function of the required fidelity.
    """
    with exit_codes():
        source = load_distribution(P) if P else None
        target = load_distribution(Q) if Q else None
        emit(reports.rate_curve_table(nu_steps, source, target, c, d), output)


def fidelity(
    P: Path = _input_file("--P", "Source distribution JSON."),
    Q: Path = _input_file("--Q", "Target distribution JSON."),
    n: int = typer.Option(1, "--n", help="Number of source copies."),
    L: int = typer.Option(1, "--L", help="Number of target copies."),
    mode: ConversionMode = typer.Option(ConversionMode.maj, "--mode", help="maj or det."),
    plan: Optional[Path] = typer.Option(None, "--plan", dir_okay=False, help="Where to dump the conversion plan JSON."),
    output: Optional[Path] = OutputOption,
):
    """
    Optimal fidelity of converting P^n into Q^L.
    """
    with exit_codes():
        emit(reports.fidelity_table(load_distribution(P), load_distribution(Q), n, L, mode.value, plan), output)


def converge(
    P: Path = _input_file("--P", "Source distribution JSON."),
    Q: Path = _input_file("--Q", "Target distribution JSON."),
    b: float = typer.Option(..., "--b", help="Second-order offset b."),
    n_grid: str = typer.Option("100,400,1600,6400", "--n-grid", help="Comma separated values of n."),
    output: Optional[Path] = OutputOption,
):
    """
    Compare exact fidelities at L = H(P)/H(Q) n + b sqrt(n) with their limit.
    """
    with exit_codes():
        try:
            grid = [int(item) for item in n_grid.split(",") if item.strip()]
        except ValueError as e:
            raise typer.BadParameter(f"--n-grid: {e}")
        emit(reports.converge_table(load_distribution(P), load_distribution(Q), b, grid), output)


def locc_plan(
    psi: Path = _input_file("--psi", "Source state JSON."),
    phi: Path = _input_file("--phi", "Target state JSON."),
    nu: float = typer.Option(..., "--nu", help="Required fidelity in (0, 1)."),
    n: int = typer.Option(..., "--n", help="Number of copies of psi."),
    mode: CopyMode = typer.Option(CopyMode.exact, "--mode", help="exact or asymptotic."),
    output: Optional[Path] = OutputOption,
):
    """
    Maximal number of copies of phi obtainable from n copies of psi by LOCC.
    """
    with exit_codes():
        emit(reports.locc_plan_table(load_state(psi), load_state(phi), nu, n, mode.value), output)


def locc_clone(
    psi: Path = _input_file("--psi", "State JSON."),
    nu: float = typer.Option(..., "--nu", help="Required fidelity in (0, 1)."),
    n: int = typer.Option(..., "--n", help="Number of copies of psi."),
    mode: CopyMode = typer.Option(CopyMode.exact, "--mode", help="exact or asymptotic."),
    output: Optional[Path] = OutputOption,
):
    """
    LOCC cloning of a known state: copies of psi obtainable from n copies.
    """
    with exit_codes():
        emit(reports.locc_clone_table(load_state(psi), nu, n, mode.value), output)


def run_study(
    study_file: Path = typer.Argument(
        ...,
        exists=True,
        file_okay=True,
        dir_okay=False,
        readable=True,
        resolve_path=True,
        help="Path to the study YAML file.",
    ),
    out_dir: Path = typer.Option(Path("results"), "--out-dir", help="Directory for the CSV outputs."),
):
    """
    Run a figure-reproduction study from a YAML file.
    """
    engine = StudyEngine()
    try:
        study = engine.load_study(study_file)
    except (yaml.YAMLError, ValidationError) as e:
        console.print(f"[bold red]Error parsing study file:[/bold red]\n{e}")
        raise typer.Exit(code=EXIT_INPUT)

    results_table = Table(title="Study Results")
    results_table.add_column("Step", style="magenta")
    results_table.add_column("Command", style="cyan")
    results_table.add_column("Status", justify="center")
    results_table.add_column("Output", style="green")

    failed = False
    try:
        for result in engine.run_study(study, out_dir / study.name.lower().replace(" ", "_")):
            if result["type"] == "study_start":
                console.print(Panel(f"Starting Study: [bold cyan]{result['name']}[/]", expand=False))
            elif result["type"] == "step_start":
                console.rule(f"[bold]Step {result['step']}/{result['total']}: {result['command']}[/bold]")
            elif result["type"] == "step_success":
                console.print(f"   [green]{result['rows']} rows in {result['elapsed_ms']:.0f}ms.[/green]")
                results_table.add_row(str(result["step"]), result["command"], Text("SUCCESS", style="bold green"), result["output"])
            elif result["type"] == "step_failure":
                failed = True
                console.print(f"[bold red]Error executing step {result['step']}:[/bold red] {result['error']}")
                results_table.add_row(str(result["step"]), result["command"], Text("FAILED", style="bold red"), "N/A")
            elif result["type"] == "study_end" and result["status"] == "failed":
                console.print(Panel("[bold red]Study halted due to error.[/bold red]", border_style="red"))

    except StudyExecutionError as e:
        console.print(f"[bold red]Study Engine Error:[/bold red] {e}")
        raise typer.Exit(code=EXIT_COMPUTATION)

    console.print(results_table)
    if failed:
        raise typer.Exit(code=EXIT_COMPUTATION)


def run_plan(
    plan_file: Path = typer.Argument(
        ...,
        exists=True,
        file_okay=True,
        dir_okay=False,
        readable=True,
        resolve_path=True,
        help="Path to the execution plan YAML file.",
    ),
    out_dir: Path = typer.Option(Path("results"), "--out-dir", help="Directory for the CSV outputs."),
    max_workers: int = typer.Option(
        4,
        "--workers", "-w",
        help="Maximum number of parallel workers"
    )
):
    """
    Run several studies from a plan file.
    """
    from core.plan_engine import PlanExecutionEngine

    try:
        engine = PlanExecutionEngine(out_dir=out_dir, max_workers=max_workers)
        plan = engine.load_plan(plan_file)
    except Exception as e:
        console.print(f"[bold red]Error loading plan:[/bold red]\n{e}")
        raise typer.Exit(code=EXIT_INPUT)

    console.print(Panel(
        f"Starting Plan: [bold cyan]{plan.name}[/]\n"
        f"Mode: [yellow]{plan.mode.upper()}[/]\n"
        f"Studies: [green]{len(plan.study_files)}[/]",
        expand=False
    ))

    summary_table = Table(title="Plan Execution Summary")
    summary_table.add_column("Study", style="magenta")
    summary_table.add_column("File", style="cyan")
    summary_table.add_column("Status", justify="center")
    summary_table.add_column("Steps", justify="center")

    errors = 0
    for event in engine.run_plan(plan):
        if event["type"] == "plan_start":
            console.print(f"Starting {event['total_studies']} studies in [bold]{event['mode']}[/] mode...")

        elif event["type"] == "study_file_start":
            console.print(f"\nLoading study {event['index']}: {event['file']}")

        elif event["type"] == "study_loaded":
            console.print(f"Loaded: {event['study_name']}")

        elif event["type"] == "step_start":
            console.print(f"  └─ Step {event['step']}/{event['total']}: {event['command']}")

        elif event["type"] == "step_success":
            console.print(f"     Success ({event['elapsed_ms']:.0f}ms)")

        elif event["type"] == "step_failure":
            errors += 1
            console.print(f"     Failed: {event['error']}", style="red")

        elif event["type"] == "study_complete":
            steps = event.get("results", {}).get("steps", [])
            success_count = sum(1 for s in steps if s["status"] == "success")
            summary_table.add_row(
                f"Study {event['index']}",
                Path(event["results"]["file"]).name,
                Text("SUCCESS", style="green"),
                f"{success_count}/{len(steps)}"
            )

        elif event["type"] == "study_error":
            errors += 1
            summary_table.add_row(
                f"Study {event['index']}",
                Path(event["file"]).name if "file" in event else "N/A",
                Text("ERROR", style="red"),
                "N/A"
            )

        elif event["type"] == "plan_complete":
            console.print(summary_table)

    if errors:
        console.print(Panel(f"[bold red]{errors} failures during the plan.[/]", border_style="red"))
        raise typer.Exit(code=EXIT_COMPUTATION)
    console.print(Panel("[bold green]Plan execution completed![/]", border_style="green"))
