import typer
from pydantic import ValidationError

from core.config import AppConfig
from core.logging_config import setup_logging

try:
    _config = AppConfig.from_env()
except ValidationError:
    # commands report the bad variable themselves
    _config = AppConfig()
setup_logging(_config.log_level, _config.log_file)

from cli import commands

app = typer.Typer(
    name="rnc",
    help="Rayleigh-normal distributions and optimal conversion of i.i.d. distributions and entangled states.",
    add_completion=False
)

app.command(name="rn-cdf")(commands.rn_cdf)
app.command(name="rn-quantile")(commands.rn_quantile)
app.command(name="rn-curve")(commands.rn_curve)
app.command(name="rate")(commands.rate)
app.command(name="rate-curve")(commands.rate_curve)
app.command(name="fidelity")(commands.fidelity)
app.command(name="converge")(commands.converge)
app.command(name="locc-plan")(commands.locc_plan)
app.command(name="locc-clone")(commands.locc_clone)
app.command(name="run-study")(commands.run_study)
app.command(name="run-plan")(commands.run_plan)

if __name__ == "__main__":
    app()
