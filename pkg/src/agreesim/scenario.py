"""Plain-text scenario files.

Grammar, one statement per line::

    # comment (also allowed after a value)
    key = value
    protocol = <name> [param=value ...]

Keys other than ``protocol`` may appear once. ``protocol`` lines accumulate
into the sweep, in file order. Top-level keys:

``name``, ``source`` (preset name), ``trials``, ``seed``, ``horizon``
(``auto`` or us), ``start_jitter``, ``output``,
``source.<param>`` (see ``interference.with_overrides``),
``timing.<field>`` (any ``TimingModel`` field),
``link.path_loss``, ``link.capture_margin``, ``link.jitter_db``,
``link.loss`` (``tx:loss,tx:loss,...`` or ``none``),
and the handshake defaults ``payload_bytes``, ``r_noise``, ``tx_power``
(``sweep``, ``sweep(-25,0)`` or ``fixed(-10)``), ``cca_before_first``,
``cca_threshold``. Handshake defaults may also be given per protocol line.

Protocol names and parameters::

    nway n=<int>            ack2
    ack-train T=<int>       ack3
    jam2 t_jam=<us>         jam3 t_jam=<us> delta_r=<dB>
    jamb r=<int> k=<int> t_slot=<us> t_settle=<us> t_jam=<us>
    ackb r=<int>
"""

from __future__ import annotations

import re
from dataclasses import fields, replace
from typing import Iterable, Mapping

from agreesim.core import TimingModel
from agreesim.harness import LinkModel, Scenario
from agreesim.interference import preset_source, with_overrides
from agreesim.protocols import (
    Ack3,
    AckB,
    AckTrain,
    FixedPower,
    HandshakeConfig,
    Jam2,
    Jam3,
    JamB,
    NWay,
    PowerSweep,
)

PROTOCOL_NAMES = ("nway", "ack2", "ack-train", "jam2", "ack3", "jam3", "jamb", "ackb")
HANDSHAKE_KEYS = ("payload_bytes", "r_noise", "tx_power", "cca_before_first", "cca_threshold")


class ScenarioError(ValueError):
    """Invalid scenario text; the message names the offending key or line."""


def _int(path: str, value: str) -> int:
    try:
        return int(value.replace("_", ""))
    except ValueError:
        raise ScenarioError(f"{path}: expected an integer, got {value!r}") from None


def _float(path: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ScenarioError(f"{path}: expected a number, got {value!r}") from None


def _bool(path: str, value: str) -> bool:
    v = value.lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ScenarioError(f"{path}: expected true/false, got {value!r}")


def parse_tx_power(path: str, value: str):
    v = value.replace(" ", "").lower()
    if v == "sweep":
        return PowerSweep()
    m = re.fullmatch(r"sweep\((-?\d+),(-?\d+)\)", v)
    if m:
        return PowerSweep(int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"fixed\((-?[\d.]+)\)", v)
    if m:
        return FixedPower(float(m.group(1)))
    raise ScenarioError(f"{path}: expected sweep, sweep(lo,hi) or fixed(dbm), got {value!r}")


_PROTOCOL_PARAMS = {
    "nway": (NWay, {"n": "n"}),
    "ack-train": (AckTrain, {"T": "trains", "t": "trains"}),
    "jam2": (Jam2, {"t_jam": "t_jam"}),
    "jam3": (Jam3, {"t_jam": "t_jam", "delta_r": "delta_r"}),
    "jamb": (JamB, {"r": "receivers", "k": "k", "t_slot": "t_slot", "t_settle": "t_settle", "t_jam": "t_jam"}),
    "ackb": (AckB, {"r": "receivers"}),
    "ack2": (AckTrain, {}),
    "ack3": (Ack3, {}),
}


def parse_protocol(name: str, params: Mapping[str, str], path: str = "protocol"):
    if name not in _PROTOCOL_PARAMS:
        raise ScenarioError(f"{path}: unknown protocol {name!r}; choose from {', '.join(PROTOCOL_NAMES)}")
    cls, allowed = _PROTOCOL_PARAMS[name]
    kwargs = {}
    for key, raw in params.items():
        if key not in allowed:
            raise ScenarioError(f"{path} {name}: unknown parameter {key!r}")
        attr = allowed[key]
        kwargs[attr] = _float(f"{path}.{key}", raw) if attr == "delta_r" else _int(f"{path}.{key}", raw)
    try:
        proto = cls(**kwargs)
        proto.validate()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path} {name}: {exc}") from None
    return proto


def _handshake_kwargs(path: str, items: Mapping[str, str]) -> dict:
    out = {}
    for key, value in items.items():
        p = f"{path}.{key}" if path else key
        if key == "payload_bytes":
            out[key] = _int(p, value)
        elif key in ("r_noise", "cca_threshold"):
            out[key] = _float(p, value)
        elif key == "cca_before_first":
            out[key] = _bool(p, value)
        elif key == "tx_power":
            out[key] = parse_tx_power(p, value)
    return out


def _parse_loss_table(path: str, value: str):
    if value.strip().lower() in ("none", "off", "0"):
        return ()
    pairs = []
    for item in value.split(","):
        try:
            tx, loss = item.split(":")
            pairs.append((float(tx), float(loss)))
        except ValueError:
            raise ScenarioError(f"{path}: expected tx:loss pairs, got {item!r}") from None
    pairs.sort()
    return tuple(pairs)


def tokenize(lines: Iterable[str]) -> list[tuple[int, str, str]]:
    out = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out.append((lineno, key.strip(), value.strip()))
    return out


def build_scenario(entries: list[tuple[int, str, str]]) -> Scenario:
    settings: dict[str, tuple[int, str]] = {}
    protocol_lines: list[tuple[int, str]] = []
    for lineno, key, value in entries:
        if key == "protocol":
            protocol_lines.append((lineno, value))
        else:
            # later entries (command-line overrides) replace earlier ones
            settings[key] = (lineno, value)

    def where(key):
        lineno = settings[key][0]
        return f"{key} (line {lineno})" if lineno > 0 else f"{key} (override)"

    source = preset_source("silent")
    if "source" in settings:
        try:
            source = preset_source(settings["source"][1])
        except ValueError as exc:
            raise ScenarioError(f"{where('source')}: {exc}") from None
    source_params = {k.split(".", 1)[1]: v for k, (_, v) in settings.items() if k.startswith("source.")}
    if source_params:
        try:
            source = with_overrides(source, **{k: _float(f"source.{k}", v) for k, v in source_params.items()})
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"source override: {exc}") from None

    timing_fields = {f.name for f in fields(TimingModel)}
    timing_kwargs = {}
    link_kwargs = {}
    handshake_items = {}
    top = {}
    for key, (lineno, value) in settings.items():
        if key.startswith("source.") or key == "source":
            continue
        path = where(key)
        if key.startswith("timing."):
            name = key.split(".", 1)[1]
            if name not in timing_fields:
                raise ScenarioError(f"{path}: unknown timing field {name!r}")
            timing_kwargs[name] = _int(path, value)
        elif key.startswith("link."):
            name = key.split(".", 1)[1]
            if name == "path_loss":
                link_kwargs["path_loss_db"] = _float(path, value)
            elif name in ("capture_margin", "jitter_db"):
                link_kwargs[name] = _float(path, value)
            elif name == "loss":
                link_kwargs["loss_table"] = _parse_loss_table(path, value)
            else:
                raise ScenarioError(f"{path}: unknown link parameter {name!r}")
        elif key in HANDSHAKE_KEYS:
            handshake_items[key] = value
        elif key in ("trials", "seed", "start_jitter"):
            top[key] = _int(path, value)
        elif key == "horizon":
            top[key] = None if value.lower() == "auto" else _int(path, value)
        elif key in ("output", "name"):
            top[key] = value
        else:
            raise ScenarioError(f"{path}: unknown key")

    try:
        timing = TimingModel(**timing_kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"timing: {exc}") from None
    try:
        link_model = LinkModel(**link_kwargs)
    except ValueError as exc:
        raise ScenarioError(f"link: {exc}") from None
    defaults = _handshake_kwargs("", handshake_items)

    configs = []
    for lineno, text in protocol_lines:
        path = f"protocol (line {lineno})" if lineno > 0 else "protocol (override)"
        tokens = text.split()
        if not tokens:
            raise ScenarioError(f"{path}: missing protocol name")
        params, common = {}, {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ScenarioError(f"{path}: expected param=value, got {tok!r}")
            k, v = tok.split("=", 1)
            (common if k in HANDSHAKE_KEYS else params)[k] = v
        proto = parse_protocol(tokens[0], params, path)
        kwargs = {**defaults, **_handshake_kwargs(path, common)}
        try:
            configs.append(HandshakeConfig(proto, **kwargs))
        except ValueError as exc:
            raise ScenarioError(f"{path}: {exc}") from None

    try:
        return Scenario(tuple(configs), source, timing=timing, link_model=link_model, **top)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def parse_override(text: str) -> tuple[int, str, str]:
    if "=" not in text:
        raise ScenarioError(f"override {text!r}: expected key=value")
    key, value = text.split("=", 1)
    return (0, key.strip(), value.strip())


def parse_scenario(text: str, overrides: Iterable[str] = ()) -> Scenario:
    entries = tokenize(text.splitlines())
    entries += [parse_override(o) for o in overrides]
    return build_scenario(entries)


def load_scenario(path: str, overrides: Iterable[str] = ()) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read(), overrides)


def with_cli_settings(scenario: Scenario, seed: int | None = None, trials: int | None = None,
                      output: str | None = None) -> Scenario:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if trials is not None:
        changes["trials"] = trials
    if output is not None:
        changes["output"] = output
    return replace(scenario, **changes) if changes else scenario
