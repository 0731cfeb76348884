from .backends import (
    DecisionBackend,
    EpisodeProbe,
    FaultyBackend,
    OracleBackend,
    faulty_wrapper,
    oracle_lang_decide,
    oracle_subgoals,
    oracle_vis_decide,
    sector_of,
)
from .prompts import (
    EncodedImage,
    History,
    PromptPayload,
    audit_payload,
    build_init_prompt,
    build_lang_prompt,
    build_recovery_prompt,
    build_verify_prompt,
    build_vis_prompt,
    encode_depth_png,
)
from .schemas import (
    BBox,
    Backtrack,
    DoubleCheck,
    GoStair,
    LangDecision,
    Point,
    Turn,
    Verification,
    VisDecision,
    parse_lang_response,
    parse_subgoals,
    parse_verification,
    parse_vis_response,
)
