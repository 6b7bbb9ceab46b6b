"""Length-controlled generation by multi-round state reflection."""

from .backend import (
    BackendConfig,
    BackendError,
    ChatBackend,
    OpenAIChatBackend,
    ScriptedBackend,
    SimulatedBackend,
    SimulatorProfile,
    TokenLedger,
    billed_cost,
)
from .core import (
    ControlConfig,
    LengthState,
    Message,
    ProtocolError,
    Strategy,
    Transcript,
    append_output,
    count_words,
    remaining_words,
)
from .cost_model import (
    CostBreakdown,
    CostParams,
    breakdown,
    compare_measured,
    cost_binary,
    cost_bound,
    cost_multi,
    cost_single,
    envelope_check,
)
from .reflector import (
    MalformedReply,
    ReflectorDirective,
    SessionOutcome,
    Terminate,
    next_directive,
    parse_reply,
    run_session,
)

__version__ = "0.1.0"
