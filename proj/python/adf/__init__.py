"""Flow-aware DDoS filtering rules: generation, placement and wire codec."""

from ._core import (
    ConfigError,
    DecodeError,
    InstanceTooLarge,
    PlacementResult,
    Rule,
    RuleSet,
    SpecError,
    Topology,
    Trace,
    TraceError,
    decode_message,
    encode_rule,
    evaluate,
    generate_attack,
    generate_topology,
    oracle_solve,
    parse_trace,
    participants,
    place,
    profile_names,
    read_trace,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DecodeError",
    "InstanceTooLarge",
    "PlacementResult",
    "Rule",
    "RuleSet",
    "SpecError",
    "Topology",
    "Trace",
    "TraceError",
    "decode_message",
    "encode_rule",
    "evaluate",
    "generate_attack",
    "generate_topology",
    "oracle_solve",
    "parse_trace",
    "participants",
    "place",
    "profile_names",
    "read_trace",
    "solve",
]
