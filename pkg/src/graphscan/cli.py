"""Command-line front end: ``graphscan {simulate,detect,calibrate,evaluate,localize}``.

Settings come from a flat ``key = value`` file (``--config``) and are
overridden by flags of the same name (``num_nodes`` -> ``--num-nodes``).
Every command is a pure function of its settings, input and seed.

Exit status: 0 finished without alarm, 2 alarm raised, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable

from graphscan.detectors import CusumDetector, GlrScanDetector, GlrWindowConfig, glr_unknown_p1_step, localize
from graphscan.evaluation import (
    CHANGE_STREAM,
    TradeoffPoint,
    calibrate_analytic,
    calibrate_empirical,
    simulate_records,
    tradeoff_curve,
    write_tradeoff_csv,
)
from graphscan.graph_model import (
    ChangeScenario,
    GraphSnapshot,
    SnapshotFormatError,
    iter_snapshots,
    make_rng,
    sample_bits,
    write_snapshots,
)
from graphscan.likelihood import EdgeCountMatrix, change_information, make_weights

EXIT_OK, EXIT_ERROR, EXIT_ALARM = 0, 1, 2

DETECTORS = ("cusum", "glr", "glr-mle")


class ConfigError(ValueError):
    """Invalid setting; ``where`` names the config line or flag responsible."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


# ------------------------------------------------------------------ parsing


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _change_point(text: str) -> float:
    if text.strip().lower() in ("inf", "none", "never"):
        return math.inf
    return int(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _detector_list(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    for name in names:
        if name not in DETECTORS:
            raise ValueError(f"unknown detector {name!r}; choose from {', '.join(DETECTORS)}")
    if not names:
        raise ValueError("no detector given")
    return names


def _scan_mode(text: str) -> str:
    if text not in ("exhaustive", "greedy"):
        raise ValueError(f"scan_mode must be 'exhaustive' or 'greedy', got {text!r}")
    return text


@dataclass(frozen=True)
class Setting:
    parse: Callable[[str], Any]
    default: Any
    help: str


SETTINGS: dict[str, Setting] = {
    "num_nodes": Setting(_int, 20, "number of nodes N"),
    "community_size": Setting(_int, 5, "size n of the changed community"),
    "planted_subgraph": Setting(_int_list, None, "comma-separated community nodes (default 0..n-1)"),
    "p0": Setting(_float, 0.2, "edge probability before the change"),
    "p1": Setting(_float, 0.5, "edge probability inside the community after the change"),
    "change_point": Setting(_change_point, math.inf, "first changed snapshot, or 'inf'"),
    "horizon": Setting(_int, 100, "snapshots to simulate"),
    "detector": Setting(_detector_list, ("glr",), "cusum, glr or glr-mle (comma list for evaluate)"),
    "subgraph": Setting(_int_list, None, "CUSUM target nodes (default: planted_subgraph)"),
    "min_lookback": Setting(_int, 1, "shortest window length"),
    "max_lookback": Setting(_int, None, "longest window length (default ceil(4 b / I))"),
    "threshold": Setting(_float, None, "alarm threshold b"),
    "alpha": Setting(_float, None, "false-alarm level for the analytic threshold"),
    "target_arl": Setting(_float, None, "target ARL for empirical calibration"),
    "scan_mode": Setting(_scan_mode, "exhaustive", "exhaustive or greedy subgraph scan"),
    "clamp": Setting(_float, None, "clamp for the estimated p1 (glr-mle)"),
    "candidate_cap": Setting(_int, 200_000, "largest C(N, n) scanned exhaustively"),
    "connected_only": Setting(_bool, False, "only scan candidates connected in the window"),
    "replications": Setting(_int, 200, "Monte Carlo replications under no change"),
    "replications_edd": Setting(_int, 200, "Monte Carlo replications with a change at t=1"),
    "arl_horizon": Setting(_int, None, "censoring horizon for no-change runs"),
    "edd_horizon": Setting(_int, 100_000, "censoring horizon for post-change runs"),
    "tolerance": Setting(_float, 0.1, "relative ARL tolerance for calibration"),
    "randomize": Setting(_bool, False, "calibrate: randomize between the thresholds around an ARL jump"),
    "thresholds": Setting(_float_list, None, "comma-separated threshold grid (evaluate)"),
    "target_arls": Setting(_float_list, None, "comma-separated target ARLs to match (evaluate)"),
    "k": Setting(_int, None, "window start (localize)"),
    "t": Setting(_int, None, "window end (localize; default last snapshot)"),
    "seed": Setting(_int, 0, "random seed"),
}


def parse_config_text(text: str, source: str = "config") -> dict[str, tuple[Any, str]]:
    """``{key: (value, where)}`` from ``key = value`` lines."""
    out: dict[str, tuple[Any, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(where, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SETTINGS:
            raise ConfigError(where, f"unknown key {key!r}")
        if key in out:
            raise ConfigError(where, f"duplicate key {key!r} (first set at {out[key][1]})")
        try:
            out[key] = (SETTINGS[key].parse(value), where)
        except ValueError as err:
            raise ConfigError(where, f"bad value for {key}: {err}") from None
    return out


class RunConfig:
    """Resolved settings; remembers where each explicit value came from."""

    def __init__(self, values: dict[str, tuple[Any, str]]):
        self._explicit = dict(values)

    def __getattr__(self, key: str):
        if key.startswith("_") or key not in SETTINGS:
            raise AttributeError(key)
        if key in self._explicit:
            return self._explicit[key][0]
        return SETTINGS[key].default

    def given(self, key: str) -> bool:
        return key in self._explicit

    def where(self, *keys: str) -> str:
        """Origin of the most recently set of ``keys`` (defaults count as 'defaults')."""
        spots = [self._explicit[k][1] for k in keys if k in self._explicit]
        if not spots:
            return "defaults"
        flags = [s for s in spots if s.startswith("--")]
        if flags:
            return flags[-1]
        return max(spots, key=lambda s: int(s.rsplit(":", 1)[1]))

    @contextmanager
    def checking(self, *keys: str):
        """Re-raise validation errors against the lines that set ``keys``."""
        try:
            yield
        except ConfigError:
            raise
        except ValueError as err:
            raise ConfigError(self.where(*keys), str(err)) from None

    # -------------------------------------------------------- builders

    @property
    def planted(self) -> tuple[int, ...]:
        nodes = self.planted_subgraph
        return tuple(range(self.community_size)) if nodes is None else nodes

    def scenario(self) -> ChangeScenario:
        keys = ("num_nodes", "community_size", "planted_subgraph", "p0", "p1", "change_point")
        with self.checking(*keys):
            if self.planted_subgraph is not None and len(self.planted_subgraph) != self.community_size:
                raise ValueError(
                    f"planted_subgraph has {len(self.planted_subgraph)} nodes, community_size is {self.community_size}"
                )
            return ChangeScenario(self.num_nodes, self.community_size, self.planted, self.p0, self.p1,
                                  change_point=self.change_point)

    def detector_name(self) -> str:
        if len(self.detector) != 1:
            raise ConfigError(self.where("detector"), "this command takes exactly one detector")
        return self.detector[0]

    def build_detector(self, name: str, threshold: float | None):
        keys = ("detector", "community_size", "p0", "p1", "min_lookback", "max_lookback", "scan_mode",
                "clamp", "candidate_cap", "connected_only", "subgraph", "threshold", "alpha", "target_arl")
        b = 1.0 if threshold is None else threshold
        with self.checking(*keys):
            if name == "cusum":
                target = self.subgraph if self.subgraph is not None else self.planted
                det = CusumDetector(subgraph=target, p0=self.p0, p1=self.p1, threshold=b)
                make_weights(self.p0, self.p1)
                if b <= 0:
                    raise ValueError(f"threshold must be positive, got {b}")
                return det
            if name == "glr-mle" and self.max_lookback is None:
                raise ValueError("glr-mle needs max_lookback")
            det = GlrScanDetector(
                community_size=self.community_size,
                p0=self.p0,
                p1=None if name == "glr-mle" else self.p1,
                threshold=b,
                min_lookback=self.min_lookback,
                max_lookback=self.max_lookback,
                scan_mode=self.scan_mode,
                clamp=self.clamp,
                candidate_cap=self.candidate_cap,
                connected_only=self.connected_only,
            )
            det.window_config()
            if name == "glr":
                make_weights(self.p0, self.p1)
            return det

    def threshold_source(self, required: bool) -> str | None:
        given = [k for k in ("threshold", "alpha", "target_arl") if self.given(k)]
        if len(given) > 1:
            raise ConfigError(self.where(*given), f"give only one of threshold, alpha, target_arl (got {', '.join(given)})")
        if required and not given:
            raise ConfigError("defaults", "one of threshold, alpha, target_arl is required")
        return given[0] if given else None


def load_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, tuple[Any, str]] = {}
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            values = parse_config_text(fh.read(), args.config)
    for key, setting in SETTINGS.items():
        raw = getattr(args, key, None)
        if raw is None:
            continue
        flag = "--" + key.replace("_", "-")
        try:
            values[key] = (setting.parse(raw), flag)
        except ValueError as err:
            raise ConfigError(flag, f"bad value: {err}") from None
    return RunConfig(values)


# ------------------------------------------------------------- thresholds


def analytic_threshold(cfg: RunConfig, name: str) -> tuple[float, int]:
    """Analytic b for ``alpha`` and the window it was solved with."""
    if name == "cusum":
        raise ConfigError(cfg.where("alpha", "detector"), "alpha calibration applies to glr detectors only")
    with cfg.checking("alpha", "max_lookback", "num_nodes", "community_size"):
        if cfg.max_lookback is not None:
            m = cfg.max_lookback
            return calibrate_analytic(cfg.alpha, m, cfg.num_nodes, cfg.community_size).b_analytic, m
        if name == "glr-mle":
            raise ValueError("glr-mle needs max_lookback")
        # b and the default window ceil(4 b / I) depend on each other; iterate to the fixed point
        info = change_information(cfg.community_size, cfg.p0, cfg.p1)
        m = max(cfg.min_lookback, 1)
        for _ in range(100):
            b = calibrate_analytic(cfg.alpha, m, cfg.num_nodes, cfg.community_size).b_analytic
            m_next = max(math.ceil(4.0 * b / info), cfg.min_lookback)
            if m_next == m:
                return b, m
            m = m_next
        raise ValueError("window / threshold iteration did not settle")


def resolve_threshold(cfg: RunConfig, name: str) -> float:
    source = cfg.threshold_source(required=True)
    if source == "threshold":
        return cfg.threshold
    if source == "alpha":
        return analytic_threshold(cfg, name)[0]
    det = cfg.build_detector(name, None)
    if name != "cusum" and cfg.max_lookback is None:
        raise ConfigError(cfg.where("target_arl"), "empirical calibration needs an explicit max_lookback")
    with cfg.checking("target_arl", "replications", "tolerance", "arl_horizon"):
        res = calibrate_empirical(det, cfg.num_nodes, cfg.target_arl, tolerance=cfg.tolerance,
                                  replications=cfg.replications, seed=cfg.seed, horizon=cfg.arl_horizon)
    return res.b_empirical


# ----------------------------------------------------------------- output


def _fmt(x: float) -> str:
    return "-inf" if x == -math.inf else f"{x:.6f}"


def _nodes(nodes) -> str:
    return "" if nodes is None else ",".join(str(int(v)) for v in nodes)


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


@contextmanager
def _input(path: str | None):
    if path is None or path == "-":
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as fh:
            yield fh


# --------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, args) -> int:
    sc = cfg.scenario()
    with cfg.checking("horizon"):
        if cfg.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {cfg.horizon}")
    rng = make_rng(cfg.seed)
    with _output(args.out) as out:
        # generate in blocks so long horizons stay cheap
        t = 0
        while t < cfg.horizon:
            count = min(1024, cfg.horizon - t)
            bits = sample_bits(sc, t + 1, count, rng)
            write_snapshots([GraphSnapshot(sc.num_nodes, row) for row in bits], out, start=t + 1)
            t += count
    return EXIT_OK


def cmd_detect(cfg: RunConfig, args) -> int:
    name = cfg.detector_name()
    # with alpha and no max_lookback the default window is the fixed point solved for b
    b = resolve_threshold(cfg, name)
    det = cfg.build_detector(name, b)
    last = 0
    with _input(args.input) as src, _output(args.out) as out:
        for t, graph in iter_snapshots(src):
            if t == 1:
                if cfg.given("num_nodes") and graph.num_nodes != cfg.num_nodes:
                    raise ConfigError(cfg.where("num_nodes"),
                                      f"input has N={graph.num_nodes}, configured num_nodes={cfg.num_nodes}")
                with cfg.checking("subgraph", "planted_subgraph", "community_size"):
                    det.fit([graph])
            else:
                det.partial_fit([graph])
            last = t
            stat = det.statistics_[-1]
            if isinstance(det, CusumDetector):
                k, nodes = det.change_starts_[-1], det.state_.target_subgraph
            else:
                k, nodes = det.change_points_[-1], det.subgraphs_[-1]
            alarm = stat > b
            out.write(f"{t} {_fmt(stat)} {int(alarm)} {'' if k is None else k} {_nodes(nodes)}\n")
            if alarm:
                a = det.alarm_
                tail = "" if a.estimated_p1 is None else f" {a.estimated_p1:.6f}"
                out.write(f"alarm {a.stop_time} {a.estimated_change_point} {_nodes(a.estimated_subgraph)} "
                          f"{_fmt(a.statistic_at_stop)}{tail}\n")
                return EXIT_ALARM
        if last == 0:
            raise SnapshotFormatError(1, "no snapshots in input")
        out.write(f"end {last}\n")
    return EXIT_OK


CALIBRATE_HEADER = ["detector", "alpha", "target_arl", "m_alpha", "b_analytic", "b_empirical", "b_alternate",
                    "mix_weight", "arl", "arl_se", "censored_frac", "within_tolerance"]


def cmd_calibrate(cfg: RunConfig, args) -> int:
    name = cfg.detector_name()
    source = cfg.threshold_source(required=True)
    if source == "threshold":
        raise ConfigError(cfg.where("threshold"), "calibrate takes alpha or target_arl, not threshold")
    row: dict[str, Any] = {key: "" for key in CALIBRATE_HEADER}
    row["detector"] = name
    if source == "alpha":
        b, m = analytic_threshold(cfg, name)
        row.update(alpha=f"{cfg.alpha:.6g}", m_alpha=m, b_analytic=f"{b:.6f}")
    else:
        det = cfg.build_detector(name, None)
        if name != "cusum":
            if cfg.max_lookback is None:
                raise ConfigError(cfg.where("target_arl"), "empirical calibration needs an explicit max_lookback")
            row["m_alpha"] = det.window_config().max_lookback
        with cfg.checking("target_arl", "replications", "tolerance", "arl_horizon"):
            res = calibrate_empirical(det, cfg.num_nodes, cfg.target_arl, tolerance=cfg.tolerance,
                                      replications=cfg.replications, seed=cfg.seed, horizon=cfg.arl_horizon,
                                      randomize=cfg.randomize)
        if res.b_alternate is not None:
            row.update(b_alternate=f"{res.b_alternate:.6f}", mix_weight=f"{res.mix_weight:.6f}")
        row.update(target_arl=f"{cfg.target_arl:.6g}", b_empirical=f"{res.b_empirical:.6f}",
                   arl=f"{res.arl_estimate:.6g}", arl_se=f"{res.arl_se:.6g}",
                   censored_frac=f"{res.censored_frac:.6g}", within_tolerance=int(res.within_tolerance))
    with _output(args.out) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CALIBRATE_HEADER)
        writer.writerow([row[k] for k in CALIBRATE_HEADER])
    return EXIT_OK


def _matched_points(cfg: RunConfig, names, scenario: ChangeScenario) -> list[TradeoffPoint]:
    """Calibrate every detector to each target ARL, then measure its delay there."""
    points = []
    targets = sorted(cfg.target_arls)
    horizon = cfg.arl_horizon or int(math.ceil(50 * targets[-1]))
    for name in names:
        det = cfg.build_detector(name, None)
        if name != "cusum" and cfg.max_lookback is None:
            raise ConfigError(cfg.where("target_arls"), "matching ARLs needs an explicit max_lookback")
        records = None
        cals = []
        with cfg.checking("target_arls", "replications", "tolerance"):
            for gamma in reversed(targets):
                res = calibrate_empirical(det, scenario.num_nodes, gamma, tolerance=cfg.tolerance,
                                          replications=cfg.replications, seed=cfg.seed, horizon=horizon,
                                          records=records)
                records = res.records
                cals.append(res)
        cals.reverse()
        top = max(c.b_empirical for c in cals)
        post = simulate_records(det, scenario.with_change_point(1), cfg.replications_edd, cfg.seed, top,
                                cfg.edd_horizon, CHANGE_STREAM)
        for res in cals:
            arl = records.estimate(res.b_empirical)
            edd = post.estimate(res.b_empirical)
            points.append(TradeoffPoint(name, res.b_empirical, arl.mean, arl.se, edd.mean, edd.se,
                                        arl.replications, edd.replications, arl.censored_frac))
    return points


def cmd_evaluate(cfg: RunConfig, args) -> int:
    sc = cfg.scenario()
    names = cfg.detector
    if cfg.given("thresholds") == cfg.given("target_arls"):
        raise ConfigError(cfg.where("thresholds", "target_arls"), "give exactly one of thresholds, target_arls")
    if cfg.given("thresholds"):
        dets = {name: cfg.build_detector(name, max(cfg.thresholds)) for name in names}
        with cfg.checking("thresholds", "replications", "replications_edd"):
            points = tradeoff_curve(dets, sc, cfg.thresholds, cfg.replications, cfg.replications_edd, cfg.seed,
                                    cfg.arl_horizon or 100_000)
    else:
        points = _matched_points(cfg, names, sc)
    with _output(args.out) as out:
        write_tradeoff_csv(points, out)
    return EXIT_OK


def cmd_localize(cfg: RunConfig, args) -> int:
    name = cfg.detector_name()
    if name == "cusum":
        raise ConfigError(cfg.where("detector"), "localize needs a glr or glr-mle detector")
    with _input(args.input) as src:
        counts = None
        for _, graph in iter_snapshots(src):
            if counts is None:
                counts = EdgeCountMatrix(graph.num_nodes)
            counts.append(graph)
    if counts is None:
        raise SnapshotFormatError(1, "no snapshots in input")
    t = cfg.t if cfg.t is not None else counts.horizon
    with cfg.checking("k", "t"):
        if cfg.k is None:
            raise ValueError("localize needs k")
        if not 1 <= cfg.k <= t <= counts.horizon:
            raise ValueError(f"need 1 <= k <= t <= {counts.horizon}, got k={cfg.k}, t={t}")
    with cfg.checking("community_size", "p0", "p1", "scan_mode", "candidate_cap", "clamp"):
        if cfg.community_size >= counts.num_nodes:
            raise ValueError(f"community_size must be < N={counts.num_nodes}")
        if name == "glr":
            nodes, stat = localize(counts, cfg.k, t, make_weights(cfg.p0, cfg.p1), cfg.community_size,
                                   cfg.scan_mode, cfg.candidate_cap)
            p_hat = None
        else:
            length = t - cfg.k + 1
            conf = GlrWindowConfig(length, length, 1.0, scan_mode=cfg.scan_mode, p1_mode="mle", clamp=cfg.clamp,
                                   candidate_cap=cfg.candidate_cap)
            step = glr_unknown_p1_step(counts, t, conf, cfg.p0, cfg.community_size)
            nodes, stat, p_hat = step.subgraph, step.statistic, step.p1_hat
    with _output(args.out) as out:
        tail = "" if p_hat is None else f" {p_hat:.6f}"
        out.write(f"{_nodes(nodes)} {_fmt(stat)}{tail}\n")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "write a simulated snapshot stream"),
    "detect": (cmd_detect, "run a detector over a snapshot stream"),
    "calibrate": (cmd_calibrate, "choose a threshold from alpha or a target ARL"),
    "evaluate": (cmd_evaluate, "ARL / detection-delay tradeoff as CSV"),
    "localize": (cmd_localize, "most likely changed subgraph in a window"),
}


class _Parser(argparse.ArgumentParser):
    # usage errors share status 1 with every other failure; 2 means alarm
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphscan", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(cmd, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", help="key = value settings file")
        p.add_argument("--out", metavar="PATH", help="output file (default: standard output)")
        if cmd in ("detect", "localize"):
            p.add_argument("--input", metavar="PATH", help="snapshot file (default: standard input)")
        for key, setting in SETTINGS.items():
            default = setting.default
            if isinstance(default, tuple):
                default = ",".join(map(str, default))
            p.add_argument("--" + key.replace("_", "-"), dest=key, metavar=key.upper(),
                           help=f"{setting.help} [default: {default}]")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args)
        return func(cfg, args)
    except SnapshotFormatError as err:
        where = args.input if getattr(args, "input", None) else "<stdin>"
        print(f"graphscan {args.command}: error: {where}: {err}", file=sys.stderr)
    except (ConfigError, OSError, ValueError) as err:
        print(f"graphscan {args.command}: error: {err}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
