"""Command-line client of the detection service.

Every subcommand speaks the service's HTTP API. With ``--server URL`` the
requests go to a running instance; without it the client mounts the ASGI
app in-process, so one-shot runs need no daemon. Files are read and written
on the client side only; the service itself never touches the filesystem.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import asyncio
import csv
import json
import sys
from pathlib import Path

import click
import httpx

from .errors import ConfigError, DataError, DriftDetectError

FLOAT_FORMAT = "%.17g"
KIND_EXIT = {"config": 2, "data": 3, "numerical": 4}


class ServiceCallError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


async def _post_async(server: str | None, path: str, payload: dict) -> dict:
    if server is None:
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        client = httpx.AsyncClient(transport=transport, base_url="http://driftdetect.internal")
    else:
        client = httpx.AsyncClient(base_url=server, timeout=httpx.Timeout(3600.0, connect=30.0))
    try:
        response = await client.post(path, json=payload)
    finally:
        await client.aclose()
    if response.status_code >= 400:
        try:
            body = response.json()
        except ValueError:
            body = {}
        if isinstance(body, dict) and "kind" in body:
            raise ServiceCallError(body["kind"], body.get("message", response.text))
        raise ServiceCallError("config", f"HTTP {response.status_code}: {response.text[:500]}")
    return response.json()


def call_service(server: str | None, path: str, payload: dict) -> dict:
    return asyncio.run(_post_async(server, path, payload))


def _fail(kind: str, message: str) -> None:
    click.echo(f"error ({kind}): {message}", err=True)
    sys.exit(KIND_EXIT.get(kind, 1))


def _run(fn) -> None:
    try:
        fn()
    except ServiceCallError as exc:
        _fail(exc.kind, str(exc))
    except DriftDetectError as exc:
        _fail(exc.kind, str(exc))


def _load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _load_rows(path: str) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            fields = [f.strip() for f in reader.fieldnames or []]
            if fields != ["year", "mu_male", "mu_female"]:
                raise DataError(f"{path}: expected header 'year,mu_male,mu_female', got {fields}")
            return [
                {
                    "year": int(r["year"]),
                    "mu_male": float(r["mu_male"]),
                    "mu_female": float(r["mu_female"]),
                }
                for r in reader
            ]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed row: {exc}") from exc


def _parse_window(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError as exc:
        raise ConfigError(f"window must look like Y1:Y2, got {text!r}") from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(",".join(header) + "\n")
            for row in rows:
                handle.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


server_option = click.option("--server", default=None, help="Base URL of a running service; in-process by default.")
config_option = click.option("--config", "config_path", required=True, type=click.Path(), help="JSON config file.")
seed_option = click.option("--seed", default=0, show_default=True, type=int)
output_option = click.option("--output", "output_dir", default=None, type=click.Path(), help="Directory for CSV outputs.")


@click.group()
def main() -> None:
    """Drift-change detection for correlated jump-diffusions."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(), help="Mortality CSV (year,mu_male,mu_female).")
@click.option("--calib-window", required=True, help="Calibration years Y1:Y2.")
@server_option
def calibrate(input_path: str, calib_window: str, server: str | None) -> None:
    """Estimate drift, volatilities and correlation from a life table."""

    def work() -> None:
        rows = _load_rows(input_path)
        window = _parse_window(calib_window)
        out = call_service(server, "/calibrate", {"rows": rows, "window": window})
        out.pop("residuals", None)
        click.echo(json.dumps(out, indent=2))

    _run(work)


@main.command()
@config_option
@output_option
@server_option
def threshold(config_path: str, output_dir: str | None, server: str | None) -> None:
    """Solve the free-boundary problem and print the alarm level."""

    def work() -> None:
        config = _load_config_file(config_path)
        out = call_service(server, "/threshold", {"config": config})
        summary = {k: out[k] for k in ("A_star", "root_found", "B", "K", "z", "rate", "c")}
        click.echo(json.dumps(summary, indent=2))
        if output_dir is not None:
            base = Path(output_dir)
            _write_csv(base / "y_curve.csv", ["s", "y"],
                       zip(out["y_curve"]["x"], out["y_curve"]["y"]))
            _write_csv(base / "value_curve.csv", ["x", "V"],
                       zip(out["value_curve"]["x"], out["value_curve"]["y"]))

    _run(work)


@main.command()
@config_option
@click.option("--input", "input_path", required=True, type=click.Path(), help="Mortality CSV (year,mu_male,mu_female).")
@click.option("--calib-window", required=True, help="Calibration years Y1:Y2.")
@click.option("--monitor-window", required=True, help="Monitoring years Y1:Y2.")
@click.option("--threshold", "threshold_value", default=None, type=float, help="Skip the solve and use this alarm level.")
@click.option("--r", "r_text", default=None, help="Override the post-change drift, e.g. '0.03,0.02'.")
@output_option
@server_option
def detect(config_path, input_path, calib_window, monitor_window, threshold_value, r_text, output_dir, server) -> None:
    """Run the full pipeline and report the alarm year, if any."""

    def work() -> None:
        config = _load_config_file(config_path)
        payload = {
            "rows": _load_rows(input_path),
            "config": config,
            "calib_window": _parse_window(calib_window),
            "monitor_window": _parse_window(monitor_window),
            "threshold": threshold_value,
        }
        if r_text is not None:
            try:
                payload["r"] = [float(v) for v in r_text.split(",")]
            except ValueError as exc:
                raise ConfigError(f"--r must be comma-separated numbers, got {r_text!r}") from exc
        out = call_service(server, "/detect", payload)
        summary = {
            "alarm_year": out["alarm_year"],
            "A_star": out["A_star"],
            "threshold_solved": out["threshold_solved"],
            "B": out["B"],
            "K": out["K"],
            "z": out["z"],
            "r_used": out["r_used"],
            "recursion_start": out["recursion_start"],
            "calibration": {
                k: out["calibration"][k]
                for k in ("sigma1", "sigma2", "rho", "a0", "a1", "window")
            },
        }
        click.echo(json.dumps(summary, indent=2))
        if output_dir is not None:
            base = Path(output_dir)
            _write_csv(
                base / "detection.csv",
                ["year", "n", "x_inc_1", "x_inc_2", "psi", "pi", "alarm"],
                (
                    (s["year"], s["n"], s["x_inc_1"], s["x_inc_2"], s["psi"], s["pi"], s["alarm"])
                    for s in out["series"]
                ),
            )
            _write_csv(base / "mortality.csv", ["year", "mu_male", "mu_female"],
                       ((m["year"], m["mu_male"], m["mu_female"]) for m in out["mortality"]))
            _write_csv(base / "residuals.csv", ["year", "x_male", "x_female"],
                       ((m["year"], m["x_male"], m["x_female"]) for m in out["residuals"]))
            _write_csv(base / "posterior.csv", ["year", "pi", "A_star"],
                       ((s["year"], s["pi"], out["A_star"]) for s in out["series"]))

    _run(work)


@main.command()
@config_option
@click.option("--horizon", required=True, type=float)
@click.option("--dt", default=0.02, show_default=True, type=float)
@click.option("--A", "threshold_value", default=None, type=float, help="Mark the first alarm of the threshold rule.")
@click.option("--regime", default="bayes", show_default=True, type=click.Choice(["bayes", "pre", "post"]))
@click.option("--paths", default=1, show_default=True, type=int, help="Number of paths; path i uses seed+i.")
@seed_option
@output_option
@server_option
def simulate(config_path, horizon, dt, threshold_value, regime, paths, seed, output_dir, server) -> None:
    """Sample paths of the disorder model and their detection statistic."""

    def work() -> None:
        config = _load_config_file(config_path)
        results = []
        for i in range(paths):
            payload = {
                "config": config, "horizon": horizon, "dt": dt,
                "seed": seed + i, "regime": regime, "threshold": threshold_value,
            }
            results.append(call_service(server, "/simulate", payload))
        click.echo(json.dumps([
            {
                "path": i,
                "theta": out["theta"],
                "alarm_index": out["alarm_index"],
                "steps": len(out["increments"]),
                "final_pi": out["pi"][-1] if out["pi"] else None,
            }
            for i, out in enumerate(results)
        ], indent=2))
        if output_dir is not None:
            dim = len(results[0]["increments"][0]) if results[0]["increments"] else 2
            header = ["path", "n", "t"] + [f"dx_{j + 1}" for j in range(dim)] + ["psi", "pi"]
            rows = []
            for i, out in enumerate(results):
                rows.append([i, 0, 0.0] + [None] * dim + [out["psi"][0], out["pi"][0]])
                for k, inc in enumerate(out["increments"], start=1):
                    rows.append([i, k, k * out["dt"]] + list(inc) + [out["psi"][k], out["pi"][k]])
            _write_csv(Path(output_dir) / "path.csv", header, rows)

    _run(work)


@main.command()
@config_option
@click.option("--A", "thresholds_text", required=True, help="Comma-separated alarm levels, e.g. '0.8,0.85,0.9'.")
@click.option("--paths", default=10_000, show_default=True, type=int)
@click.option("--horizon", default=None, type=float)
@click.option("--dt", default=0.02, show_default=True, type=float)
@seed_option
@output_option
@server_option
def risk(config_path, thresholds_text, paths, horizon, dt, seed, output_dir, server) -> None:
    """Monte Carlo Bayes risk across alarm thresholds."""

    def work() -> None:
        config = _load_config_file(config_path)
        try:
            thresholds = [float(v) for v in thresholds_text.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--A must be comma-separated numbers, got {thresholds_text!r}") from exc
        payload = {
            "config": config, "thresholds": thresholds, "paths": paths,
            "horizon": horizon, "dt": dt, "seed": seed,
        }
        out = call_service(server, "/risk", payload)
        click.echo(json.dumps(out["rows"], indent=2))
        if output_dir is not None:
            header = [
                "A", "false_alarm", "false_alarm_se", "delay", "delay_se",
                "risk", "risk_se", "posterior_form", "posterior_form_se", "censored",
            ]
            _write_csv(
                Path(output_dir) / "risk.csv",
                header,
                ([row[k] for k in header] for row in out["rows"]),
            )

    _run(work)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the detection service under uvicorn."""
    import uvicorn

    uvicorn.run("driftdetect.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
