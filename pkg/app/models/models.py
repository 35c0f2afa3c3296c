from enum import Enum
from typing import Any, Annotated, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import (
    AliasChoices,
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveInt,
    field_validator,
    model_validator,
)

UINT64_MAX = (1 << 64) - 1


def _frozen_matrix(value: Any, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} debe ser una matriz no vacía, forma recibida {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contiene valores no finitos")
    arr.flags.writeable = False
    return arr


class Method(str, Enum):
    """Métodos de construcción de ensembles."""
    MC = "MC"
    QMC = "QMC"
    OMC = "OMC"
    BOMC = "BOMC"
    OPT_NOMC = "OptNOMC"
    ALG_NOMC = "AlgNOMC"


# Nombres aceptados en los archivos de configuración
METHOD_ALIASES: Dict[str, Method] = {
    "mc": Method.MC,
    "qmc": Method.QMC,
    "omc": Method.OMC,
    "bomc": Method.BOMC,
    "opt-nomc": Method.OPT_NOMC,
    "alg-nomc": Method.ALG_NOMC,
}

LawTag = Literal["GaussianStd", "UnitSphere", "GaussianScaled", "MaternSpectral", "LaplaceProduct"]


class IsotropicLaw(BaseModel):
    """Ley de muestreo: dirección uniforme en la esfera por un radio independiente."""
    model_config = ConfigDict(frozen=True)

    tag: LawTag
    d: PositiveInt
    lengthscale: Optional[float] = None
    nu: Optional[float] = None

    @property
    def isotropic(self) -> bool:
        return self.tag != "LaplaceProduct"

    @classmethod
    def gaussian(cls, d: int) -> "IsotropicLaw":
        return cls(tag="GaussianStd", d=d)

    @classmethod
    def sphere(cls, d: int) -> "IsotropicLaw":
        return cls(tag="UnitSphere", d=d)


class Ensemble(BaseModel):
    """Matriz s×d de muestras (una por fila) con su procedencia."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rows: np.ndarray
    method: Method
    law: IsotropicLaw
    seed: int = Field(ge=0, le=UINT64_MAX)
    block_size: Optional[PositiveInt] = None

    @field_validator("rows", mode="before")
    @classmethod
    def _check_rows(cls, v):
        return _frozen_matrix(v, "rows")

    @model_validator(mode="after")
    def _check_dimension(self):
        if self.rows.shape[1] != self.law.d:
            raise ValueError(f"las filas tienen dimensión {self.rows.shape[1]} pero la ley d={self.law.d}")
        return self

    @property
    def s(self) -> int:
        return int(self.rows.shape[0])

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])


class OptNomcConfig(BaseModel):
    """Hiperparámetros del descenso de energía de opt-NOMC."""
    model_config = ConfigDict(frozen=True)

    delta: float = Field(default=0.1, gt=0)
    eta: float = Field(default=1.0, gt=0)
    T: NonNegativeInt = 50000
    early_stop: bool = False
    early_stop_window: PositiveInt = 5000
    early_stop_tol: float = Field(default=0.01, ge=0)
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)


class AlgNomcSpec(BaseModel):
    """Familia de caracteres polinomiales sobre F_p de grado r."""
    model_config = ConfigDict(frozen=True)

    p: PositiveInt
    r: int = Field(default=2, ge=2)
    selected_count: Optional[PositiveInt] = None

    @property
    def d(self) -> int:
        return 2 * self.p


class OptNomcTrace(BaseModel):
    """Traza por iteración: energía total y extremos de distancias por pares."""
    energy: List[float] = Field(default_factory=list)
    d_max: List[float] = Field(default_factory=list)
    d_min: List[float] = Field(default_factory=list)
    iterations: int = 0
    stopped_early: bool = False
    heuristic_iteration: Optional[int] = None


class OptNomcResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ensemble: Ensemble
    trace: OptNomcTrace
    initial_rows: np.ndarray


KernelTag = Literal["Gaussian", "Matern", "Cauchy", "Angular", "Quadratic", "Tanh", "Sine", "ExpPNG"]


class KernelFamily(str, Enum):
    SHIFT_INVARIANT = "ShiftInvariant"
    PNG = "PNG"


class KernelSpec(BaseModel):
    """Descripción de un kernel: invariante por traslación o PNG."""
    model_config = ConfigDict(frozen=True)

    tag: KernelTag
    sigma: float = Field(default=1.0, gt=0)
    lengthscale: float = Field(default=1.0, gt=0)
    nu: float = Field(default=1.5, gt=0)
    c: float = 1.0

    @field_validator("c")
    @classmethod
    def _nonzero_c(cls, v):
        if v == 0:
            raise ValueError("c no puede ser 0")
        return v

    @property
    def family(self) -> KernelFamily:
        if self.tag in ("Gaussian", "Matern", "Cauchy"):
            return KernelFamily.SHIFT_INVARIANT
        return KernelFamily.PNG

    @property
    def name(self) -> str:
        if self.tag == "Matern":
            return f"Matern{self.nu:g}"
        if self.tag == "ExpPNG":
            return f"ExpPNG{self.c:g}"
        return self.tag


class FeatureBundle(BaseModel):
    """Ensemble más fases b (sólo kernels invariantes por traslación)."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ensemble: Ensemble
    phases: Optional[np.ndarray] = None
    spec: KernelSpec

    @model_validator(mode="after")
    def _check_phases(self):
        shift_invariant = self.spec.family == KernelFamily.SHIFT_INVARIANT
        if shift_invariant != (self.phases is not None):
            raise ValueError("las fases deben existir si y sólo si el kernel es invariante por traslación")
        if self.phases is not None and self.phases.shape != (self.ensemble.s,):
            raise ValueError("se necesita una fase por fila del ensemble")
        return self


class Dataset(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    scale: float = Field(default=1.0, gt=0)

    @field_validator("points", mode="before")
    @classmethod
    def _check_points(cls, v):
        arr = _frozen_matrix(v, "points")
        if arr.shape[0] < 2:
            raise ValueError("un dataset necesita al menos 2 puntos")
        return arr


class PointCloud(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    @field_validator("points", mode="before")
    @classmethod
    def _check_points(cls, v):
        return _frozen_matrix(v, "points")

    @property
    def m(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])


DistributionTag = Literal["Gaussian", "StudentT", "Cauchy", "Laplace", "GaussianMixture", "InverseWishartGaussian"]


class DistributionSpec(BaseModel):
    """Receta generativa de una nube de puntos para los experimentos de SWD."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tag: DistributionTag
    means: np.ndarray
    covariances: np.ndarray
    weights: Optional[np.ndarray] = None
    df: Optional[float] = None
    nu: Optional[float] = None
    name: str = ""

    @field_validator("means", mode="before")
    @classmethod
    def _means(cls, v):
        arr = np.atleast_2d(np.array(v, dtype=float))
        arr.flags.writeable = False
        return arr

    @field_validator("covariances", mode="before")
    @classmethod
    def _covs(cls, v):
        arr = np.array(v, dtype=float)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        arr.flags.writeable = False
        return arr

    @field_validator("weights", mode="before")
    @classmethod
    def _weights(cls, v):
        if v is None:
            return None
        arr = np.array(v, dtype=float).ravel()
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def _check_shapes(self):
        q, d = self.means.shape
        if self.covariances.shape != (q, d, d):
            raise ValueError(f"covarianzas de forma {self.covariances.shape}, se esperaba {(q, d, d)}")
        if not np.allclose(self.covariances, np.swapaxes(self.covariances, 1, 2), atol=1e-10):
            raise ValueError("las covarianzas deben ser simétricas")
        if self.tag == "GaussianMixture":
            if self.weights is None or len(self.weights) != q:
                raise ValueError("una mezcla necesita un peso por componente")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("los pesos deben estar en el símplex")
        if self.tag == "StudentT" and (self.df is None or self.df <= 0):
            raise ValueError("StudentT necesita df > 0")
        if self.tag == "InverseWishartGaussian" and (self.nu is None or self.nu <= d - 1):
            raise ValueError("InverseWishartGaussian necesita nu > d - 1")
        return self

    @property
    def d(self) -> int:
        return int(self.means.shape[1])


class CovRecipe(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["M_full", "D_diag"]
    d: PositiveInt
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)


class MseCell(BaseModel):
    """Una celda (método, multiplicador) de una tabla de MSE."""
    label: str
    method: str
    multiplier: int
    s: int
    trials: int
    mean_err: float
    mse: float
    ci95: float
    std: float = 0.0


class MseTable(BaseModel):
    key_column: Literal["kernel", "distribution"] = "kernel"
    cells: List[MseCell] = Field(default_factory=list)


class SweepRow(BaseModel):
    kernel: str
    method: str
    s: int
    trials: int
    mean_sup_err: float
    ci95: float
    std: float = 0.0


class SweepTable(BaseModel):
    rows: List[SweepRow] = Field(default_factory=list)
    decreasing: Dict[str, bool] = Field(default_factory=dict)


TestFunctionTag = Literal["Square", "AbsCos", "ExpC"]


class TestFunction(BaseModel):
    """Función f de F_{f,D}(z) = E f(ωᵀz) con su clase (F1, F2, F3)."""
    __test__ = False  # no es un test de pytest
    model_config = ConfigDict(frozen=True)

    tag: TestFunctionTag
    c: float = 1.0

    @property
    def function_class(self) -> str:
        return {"Square": "F1", "AbsCos": "F2", "ExpC": "F3"}[self.tag]


Verdict = Literal["consistent", "violated", "inconclusive"]


class StatisticEntry(BaseModel):
    name: str
    value: float
    low: Optional[float] = None
    high: Optional[float] = None


class DiagnosticReport(BaseModel):
    claim_id: str
    config: Dict[str, Any] = Field(default_factory=dict)
    statistics: List[StatisticEntry] = Field(default_factory=list)
    verdict: Verdict
    notes: List[str] = Field(default_factory=list)


class RunResult(BaseModel):
    """Resultado de una ejecución de la CLI."""
    success: bool
    message: str
    exit_code: int = 0
    artifacts: List[str] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Configuración de ejecución (un archivo JSON por corrida)
# ---------------------------------------------------------------------------

MethodName = Literal["mc", "qmc", "omc", "bomc", "opt-nomc", "alg-nomc"]
DEFAULT_METHODS: List[str] = ["mc", "qmc", "bomc", "opt-nomc", "alg-nomc"]


class _BaseRunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    seed: int = Field(default=0, ge=0, le=UINT64_MAX, validation_alias=AliasChoices("seed", "master_seed"))
    out: Optional[str] = None


class SampleConfig(_BaseRunConfig):
    command: Literal["sample"]
    law: Literal["gaussian", "sphere", "gaussian_scaled", "matern", "laplace"]
    d: PositiveInt
    s: PositiveInt
    method: Literal["mc", "qmc", "omc", "bomc"] = "mc"
    lengthscale: Optional[float] = None
    nu: Optional[float] = None


class BuildNomcConfig(_BaseRunConfig):
    command: Literal["build-nomc"]
    variant: Literal["opt", "alg"] = "opt"
    d: Optional[PositiveInt] = None
    s: Optional[PositiveInt] = None
    p: Optional[PositiveInt] = None
    r: int = Field(default=2, ge=2)
    selected_count: Optional[PositiveInt] = None
    delta: float = Field(default=0.1, gt=0)
    eta: float = Field(default=1.0, gt=0)
    T: NonNegativeInt = 50000
    early_stop: bool = False
    early_stop_window: PositiveInt = 5000
    early_stop_tol: float = Field(default=0.01, ge=0)

    @model_validator(mode="after")
    def _required_by_variant(self):
        if self.variant == "opt" and (self.d is None or self.s is None):
            raise ValueError("la variante opt necesita d y s")
        if self.variant == "alg" and self.p is None:
            raise ValueError("la variante alg necesita p")
        return self


class CoherenceConfig(_BaseRunConfig):
    command: Literal["coherence"]
    ensemble: str


class BenchKernelConfig(_BaseRunConfig):
    command: Literal["bench-kernel"]
    kernel: Literal["gaussian", "matern", "cauchy", "angular", "quadratic", "tanh", "sine", "exp"]
    sigma: float = Field(default=1.0, gt=0)
    lengthscale: float = Field(default=1.0, gt=0)
    nu: float = Field(default=1.5, gt=0)
    c: float = 1.0
    d: PositiveInt = 8
    methods: List[MethodName] = Field(default_factory=lambda: list(DEFAULT_METHODS))
    multipliers: List[PositiveInt] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    trials: int = Field(default=450, ge=2)
    pairs: PositiveInt = 100
    dataset: Optional[str] = None
    nomc_iterations: NonNegativeInt = 2000
    plot: bool = True


class BenchSwdConfig(_BaseRunConfig):
    command: Literal["bench-swd"]
    distribution: Literal["gaussian", "student_t", "cauchy", "laplace",
                          "mixture2", "mixture3", "mixture4", "inverse_wishart"] = "gaussian"
    d: PositiveInt = 8
    methods: List[MethodName] = Field(default_factory=lambda: list(DEFAULT_METHODS))
    multipliers: List[PositiveInt] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    trials: int = Field(default=450, ge=2)
    points: PositiveInt = 10000
    p: float = Field(default=2.0, ge=1)
    nomc_iterations: NonNegativeInt = 2000
    reference_directions: Optional[PositiveInt] = None
    plot: bool = True
    export_clouds: bool = False


class DiagnoseConfig(_BaseRunConfig):
    command: Literal["diagnose"]
    claim: Literal["nd", "mgf", "mse", "tail", "legendre", "sweep"]
    d: int = Field(default=3, ge=1)
    s: Optional[PositiveInt] = None
    trials: PositiveInt = 100000
    function: Literal["square", "abscos", "expc"] = "square"
    c: float = 1.0
    z: Optional[List[float]] = None
    thresholds: List[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 0.95])
    lambdas: List[float] = Field(default_factory=lambda: [-0.5, -0.25, 0.25, 0.5])
    multipliers: List[PositiveInt] = Field(default_factory=lambda: [1])
    eps: List[float] = Field(default_factory=lambda: [0.1, 0.25, 0.5])
    levels: List[float] = Field(default_factory=lambda: [1.5, 2.0])
    thetas: List[float] = Field(default_factory=lambda: [float(t) for t in np.linspace(0.0, 2.0, 41)])
    kernel: Literal["gaussian", "matern", "cauchy", "angular", "quadratic", "exp"] = "gaussian"
    s_values: List[PositiveInt] = Field(default_factory=lambda: [4, 16, 64])
    grid_points: PositiveInt = 50
    grid_radius: float = Field(default=2.0, gt=0)
    methods: List[MethodName] = Field(default_factory=lambda: ["bomc", "mc"])


RunConfig = Annotated[
    Union[SampleConfig, BuildNomcConfig, CoherenceConfig, BenchKernelConfig, BenchSwdConfig, DiagnoseConfig],
    Field(discriminator="command"),
]
