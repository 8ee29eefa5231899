"""INI-style run configuration covering graph, protocol, signals, trigger,
network, training and test settings."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .etm import DEFAULT_ALPHA
from .graph import GENERATORS, NetworkGraph, make_graph
from .protocols import INIT_MODES, LINEAR, SLIDING, ProtocolConfig


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _edges(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in text.replace(";", ",").split(","):
        tok = tok.strip()
        if tok:
            i, j = tok.split("-")
            out.append((int(i), int(j)))
    return tuple(out)


@dataclass(frozen=True)
class GraphSpec:
    kind: str = "path"
    n_agents: int = 2
    edges: tuple[tuple[int, int], ...] = ()
    seed: int = 0
    edge_prob: float = 0.3

    def build(self) -> NetworkGraph:
        return make_graph(self.kind, self.n_agents, edges=self.edges or None,
                          seed=self.seed, edge_prob=self.edge_prob)


@dataclass(frozen=True)
class SignalSpec:
    batch_size: int = 10
    horizon: float = 10.0
    step: float = 1e-3
    amp_offset_range: tuple[float, float] = (1.0, 5.0)
    freq_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0
    path: str = ""


@dataclass(frozen=True)
class TriggerSpec:
    sigma: float = 0.1
    epsilon: float = 1e-3
    alpha: float = DEFAULT_ALPHA
    mode: str = "fuzzy"
    eta_fixed: float = 0.5


@dataclass(frozen=True)
class NetworkSpec:
    layer_dims: tuple[int, ...] = (2, 16, 16, 1)
    init_seed: int = 0
    feature_scaling: bool = False


@dataclass(frozen=True)
class TrainingSpec:
    lam: float = 0.1
    lambdas: tuple[float, ...] = (0.001, 0.1, 1.0)
    learning_rate: float = 5e-2
    epochs: int = 150
    pretrain_epochs: int = 200
    target_eta: float = 0.5
    clip_norm: float = 10.0
    checkpoint_every: int = 50


@dataclass(frozen=True)
class TestSpec:
    graph: GraphSpec = field(default_factory=lambda: GraphSpec("complete", 5))
    batch_size: int = 200
    seed: int = 1


@dataclass(frozen=True)
class RunConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    signals: SignalSpec = field(default_factory=SignalSpec)
    trigger: TriggerSpec = field(default_factory=TriggerSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    test: TestSpec = field(default_factory=TestSpec)
    output: str = "runs/default"

    def validate(self) -> "RunConfig":
        t = self.trigger
        if not t.sigma >= 0:
            raise ConfigError(f"trigger.sigma must be >= 0, got {t.sigma}")
        if not t.epsilon > 0:
            raise ConfigError(f"trigger.epsilon must be > 0, got {t.epsilon}")
        if not t.alpha > 0:
            raise ConfigError("trigger.alpha must be > 0")
        if t.mode not in ("hard", "fuzzy"):
            raise ConfigError("trigger.mode must be 'hard' or 'fuzzy'")
        if not 0 <= t.eta_fixed <= 1:
            raise ConfigError("trigger.eta_fixed must lie in [0, 1]")
        s = self.signals
        if s.batch_size < 1:
            raise ConfigError("signals.batch_size must be >= 1")
        if s.step <= 0 or s.horizon <= 0:
            raise ConfigError("signals.step and signals.horizon must be positive")
        k = round(s.horizon / s.step)
        if abs(k * s.step - s.horizon) > 1e-9 * max(1.0, s.horizon):
            raise ConfigError("signals.horizon must be an integer multiple of signals.step")
        for name, r in (("amp_offset_range", s.amp_offset_range), ("freq_range", s.freq_range)):
            if len(r) != 2 or r[0] > r[1]:
                raise ConfigError(f"signals.{name} must be 'low, high'")
        for g in (self.graph, self.test.graph):
            if g.kind not in list(GENERATORS) + ["edges"]:
                raise ConfigError(f"unknown graph kind {g.kind!r}")
            if g.n_agents < 2:
                raise ConfigError("graphs need at least 2 agents")
        if self.network.layer_dims[0] != 2 or self.network.layer_dims[-1] != 1:
            raise ConfigError("network.layer_dims must start with 2 inputs and end with 1 output")
        tr = self.training
        if tr.lam < 0 or any(v < 0 for v in tr.lambdas):
            raise ConfigError("training lambdas must be >= 0")
        if tr.epochs < 0 or tr.pretrain_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if tr.learning_rate <= 0:
            raise ConfigError("training.learning_rate must be positive")
        if self.test.batch_size < 1:
            raise ConfigError("test.batch_size must be >= 1")
        return self

    # serialization

    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser()
        cp["graph"] = _graph_section(self.graph)
        p = self.protocol
        cp["protocol"] = {"kind": p.kind, "kappa": repr(p.kappa),
                          "gains": ", ".join(repr(g) for g in p.gains),
                          "order": str(p.order), "init": p.init}
        s = self.signals
        cp["signals"] = {"batch_size": str(s.batch_size), "horizon": repr(s.horizon),
                         "step": repr(s.step),
                         "amp_offset_range": ", ".join(repr(v) for v in s.amp_offset_range),
                         "freq_range": ", ".join(repr(v) for v in s.freq_range),
                         "seed": str(s.seed), "path": s.path}
        cp["trigger"] = {k: (v if isinstance(v, str) else repr(v))
                         for k, v in asdict(self.trigger).items()}
        n = self.network
        cp["network"] = {"layer_dims": ", ".join(str(d) for d in n.layer_dims),
                         "init_seed": str(n.init_seed),
                         "feature_scaling": str(n.feature_scaling).lower()}
        tr = self.training
        cp["training"] = {"lambda": repr(tr.lam),
                          "lambdas": ", ".join(repr(v) for v in tr.lambdas),
                          "learning_rate": repr(tr.learning_rate), "epochs": str(tr.epochs),
                          "pretrain_epochs": str(tr.pretrain_epochs),
                          "target_eta": repr(tr.target_eta), "clip_norm": repr(tr.clip_norm),
                          "checkpoint_every": str(tr.checkpoint_every)}
        test = _graph_section(self.test.graph, prefix="graph_")
        test.update({"batch_size": str(self.test.batch_size), "seed": str(self.test.seed)})
        cp["test"] = test
        cp["output"] = {"directory": self.output}
        return cp

    def to_string(self) -> str:
        import io
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_string())
        return path

    @classmethod
    def from_string(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(cp)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        return cls.from_string(path.read_text())

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "RunConfig":
        d = cls()
        try:
            graph = _read_graph(cp, "graph", d.graph)
            sec = cp["protocol"] if cp.has_section("protocol") else {}
            protocol = ProtocolConfig(
                kind=sec.get("kind", d.protocol.kind),
                kappa=float(sec.get("kappa", d.protocol.kappa)),
                gains=_floats(sec["gains"]) if "gains" in sec else d.protocol.gains,
                order=int(sec.get("order", d.protocol.order)),
                init=sec.get("init", d.protocol.init),
            )
            sec = cp["signals"] if cp.has_section("signals") else {}
            signals = SignalSpec(
                batch_size=int(sec.get("batch_size", d.signals.batch_size)),
                horizon=float(sec.get("horizon", d.signals.horizon)),
                step=float(sec.get("step", d.signals.step)),
                amp_offset_range=_floats(sec["amp_offset_range"]) if "amp_offset_range" in sec
                else d.signals.amp_offset_range,
                freq_range=_floats(sec["freq_range"]) if "freq_range" in sec
                else d.signals.freq_range,
                seed=int(sec.get("seed", d.signals.seed)),
                path=sec.get("path", d.signals.path),
            )
            sec = cp["trigger"] if cp.has_section("trigger") else {}
            trigger = TriggerSpec(
                sigma=float(sec.get("sigma", d.trigger.sigma)),
                epsilon=float(sec.get("epsilon", d.trigger.epsilon)),
                alpha=float(sec.get("alpha", d.trigger.alpha)),
                mode=sec.get("mode", d.trigger.mode),
                eta_fixed=float(sec.get("eta_fixed", d.trigger.eta_fixed)),
            )
            sec = cp["network"] if cp.has_section("network") else {}
            network = NetworkSpec(
                layer_dims=_ints(sec["layer_dims"]) if "layer_dims" in sec else d.network.layer_dims,
                init_seed=int(sec.get("init_seed", d.network.init_seed)),
                feature_scaling=_bool(sec.get("feature_scaling", d.network.feature_scaling)),
            )
            sec = cp["training"] if cp.has_section("training") else {}
            dt = d.training
            training = TrainingSpec(
                lam=float(sec.get("lambda", dt.lam)),
                lambdas=_floats(sec["lambdas"]) if "lambdas" in sec else dt.lambdas,
                learning_rate=float(sec.get("learning_rate", dt.learning_rate)),
                epochs=int(sec.get("epochs", dt.epochs)),
                pretrain_epochs=int(sec.get("pretrain_epochs", dt.pretrain_epochs)),
                target_eta=float(sec.get("target_eta", dt.target_eta)),
                clip_norm=float(sec.get("clip_norm", dt.clip_norm)),
                checkpoint_every=int(sec.get("checkpoint_every", dt.checkpoint_every)),
            )
            test_graph = _read_graph(cp, "test", d.test.graph, prefix="graph_")
            sec = cp["test"] if cp.has_section("test") else {}
            test = TestSpec(test_graph, int(sec.get("batch_size", d.test.batch_size)),
                            int(sec.get("seed", d.test.seed)))
            output = cp.get("output", "directory", fallback=d.output)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(graph, protocol, signals, trigger, network, training, test, output).validate()

    def with_overrides(self, overrides: list[str]) -> "RunConfig":
        """Apply ``section.key=value`` overrides through the INI layer."""
        cp = self.to_parser()
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override {item!r} is not section.key=value")
            lhs, value = item.split("=", 1)
            section, key = lhs.split(".", 1)
            if not cp.has_section(section):
                cp.add_section(section)
            cp[section][key] = value
        return RunConfig.from_parser(cp)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _graph_section(g: GraphSpec, prefix: str = "") -> dict[str, str]:
    return {f"{prefix}kind": g.kind, f"{prefix}n_agents": str(g.n_agents),
            f"{prefix}edges": ", ".join(f"{i}-{j}" for i, j in g.edges),
            f"{prefix}seed": str(g.seed), f"{prefix}edge_prob": repr(g.edge_prob)}


def _read_graph(cp, section: str, default: GraphSpec, prefix: str = "") -> GraphSpec:
    sec = cp[section] if cp.has_section(section) else {}
    get = lambda k, dv: sec.get(prefix + k, dv)  # noqa: E731
    return GraphSpec(
        kind=get("kind", default.kind),
        n_agents=int(get("n_agents", default.n_agents)),
        edges=_edges(get("edges", "")) or default.edges,
        seed=int(get("seed", default.seed)),
        edge_prob=float(get("edge_prob", default.edge_prob)),
    )


def default_config(output: str = "runs/default") -> RunConfig:
    """Training on two agents, testing on five (complete graph)."""
    return RunConfig(output=output)


__all__ = ["ConfigError", "GraphSpec", "SignalSpec", "TriggerSpec", "NetworkSpec",
           "TrainingSpec", "TestSpec", "RunConfig", "default_config", "LINEAR", "SLIDING",
           "INIT_MODES", "fields", "replace"]
