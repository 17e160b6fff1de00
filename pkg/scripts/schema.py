from enum import Enum
from typing import List, Optional, Set

from pydantic import BaseModel, Field


# =============================================================================
# ENUMS
# =============================================================================

class EpisodeClass(str, Enum):
    """Shape of an episode's partial order."""
    SERIAL = "serial"
    PARALLEL = "parallel"
    GENERAL = "general"


class RecordFlag(str, Enum):
    """Conditions attached to a ranked record."""
    UNSCORABLE = "unscorable"        # n = 0, p = 0 or sigma = 0
    TRUNCATED = "truncated"          # a scan walk hit the window-length bound
    SIGMA_CLAMPED = "sigma_clamped"  # tiny negative variance set to 0
    ERROR = "error"                  # statistics failed for this episode


# =============================================================================
# MINING
# =============================================================================

class MinerConfig(BaseModel):
    min_support: int = Field(default=5, ge=1, description="Threshold on disjoint minimal windows")
    max_window: int = Field(default=15, ge=2, description="Longest minimal window counted while mining")
    max_nodes: int = Field(default=5, ge=1, description="Largest episode considered")
    state_cap: int = Field(default=2 ** 16, ge=2, description="Machine state-count guard; larger episodes count as infrequent")
    episode_classes: Set[EpisodeClass] = Field(
        default_factory=lambda: {EpisodeClass.SERIAL, EpisodeClass.PARALLEL, EpisodeClass.GENERAL},
        description="Classes kept in the miner output",
    )


# =============================================================================
# STATISTICS
# =============================================================================

class EpisodeStatistics(BaseModel):
    """Model quantities of one episode plus what was observed on the test data."""

    rho: float = Field(description="Window weight decay")
    p: float = Field(default=0.0, description="E[X1]")
    v: float = Field(default=0.0, description="E[Y1]")
    q: float = Field(default=0.0, description="E[Z1]")
    z2: float = Field(default=0.0, description="E[Z1^2]")
    w: float = Field(default=0.0, description="E[Y1 Z1]")

    f000: float = 0.0
    f110: float = 0.0
    f011: float = 0.0
    f121: float = 0.0

    d11: float = 0.0
    d12: float = 0.0
    d21: float = 0.0
    d22: float = 0.0

    c11: float = 0.0
    c12: float = 0.0
    c22: float = 0.0

    mu: Optional[float] = None
    sigma2: Optional[float] = None
    sigma_clamped: bool = False

    r: Optional[float] = Field(default=None, description="Observed average window weight")
    n: int = Field(default=0, description="Observed minimal windows")
    score: Optional[float] = None


class MachineSizes(BaseModel):
    episode_states: int
    episode_edges: int
    simple_states: int
    simple_edges: int
    window_states: int
    window_edges: int
    cross_states: int
    cross_edges: int


class EpisodeDiagnostics(BaseModel):
    """Per-episode regression dump."""

    episode_id: int
    episode: str
    statistics: EpisodeStatistics
    sizes: MachineSizes


# =============================================================================
# REPORTS
# =============================================================================

class RankedRecord(BaseModel):
    episode_id: int = Field(description="Position of the episode in the input file")
    episode: str = Field(description="Linear text rendering")
    episode_class: EpisodeClass
    nodes: int
    support: Optional[int] = Field(default=None, description="Support on the training sequence")
    n: int = Field(default=0, description="Minimal windows in the test sequence")
    r: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None
    score: Optional[float] = None
    p_value: Optional[float] = None
    flags: List[RecordFlag] = Field(default_factory=list)

    model_config = {"use_enum_values": True, "validate_assignment": True}

    @property
    def scorable(self) -> bool:
        return self.score is not None


class MonteCarloReport(BaseModel):
    name: str = Field(description="Estimated quantity (p, q, v, w, z2, f000, ...)")
    estimate: float
    standard_error: float = Field(description="Sample standard deviation / sqrt(trials)")
    trials: int
    seed: int

    def within(self, value: float, n_se: float = 3.0) -> bool:
        """True if ``value`` lies within ``n_se`` standard errors of the estimate."""
        return abs(self.estimate - value) <= n_se * self.standard_error + 1e-15
