"""Checkpoint programs: CRBD, BiSSE and toy models with exact answers."""

from .bisse import BisseConfig, BisseProgram, bisse_program
from .crbd import (
    Augmentation,
    AugmentationStats,
    CrbdConfig,
    CrbdProgram,
    HiddenTreeExplosion,
    branch_survives,
    crbd_program,
    propose_complete_tree,
)
from .posterior import GammaMixture, posterior_mixture
from .rates import SAMPLING_MODES, Rate
from .toy import (
    DEFAULT_LGSS_Y,
    IndicatorConfig,
    IndicatorProgram,
    LgssConfig,
    LgssProgram,
    indicator_acceptance,
    indicator_program,
    kalman_log_evidence,
    lgss_program,
    simulate_lgss,
)
