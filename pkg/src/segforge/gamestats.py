"""Survey statistics: proportion z-tests, intervals and the 2x2 crosstab.

The normal CDF and its inverse are implemented locally with well-known
rational approximations (Cody's erfc, Acklam's quantile with a Halley
polish) so results do not depend on platform math libraries beyond exp/log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import SegforgeError

ALTERNATIVES = ("two-sided", "greater", "less")

DEFAULT_NULL_PROPORTION = 0.5
DEFAULT_CI_LEVEL = 0.99
DEFAULT_SIGNIFICANCE = 0.01
DEFAULT_MIN_TRIALS = 30

# p-values below this render as "0.00000" in reports
_P_DISPLAY_FLOOR = 1e-5


class InsufficientSample(SegforgeError):
    """Too few trials for the normal approximation to hold."""


# ===== Normal distribution =====

# Coefficients for erf/erfc rational approximations (Cody, 1969); three
# argument regions, each accurate to well below 1e-15 relative error.
_ERF_A = (
    3.16112374387056560e00,
    1.13864154151050156e02,
    3.77485237685302021e02,
    3.20937758913846947e03,
    1.85777706184603153e-1,
)
_ERF_B = (
    2.36012909523441209e01,
    2.44024637934444173e02,
    1.28261652607737228e03,
    2.84423683343917062e03,
)
_ERF_C = (
    5.64188496988670089e-1,
    8.88314979438837594e00,
    6.61191906371416295e01,
    2.98635138197400131e02,
    8.81952221241769090e02,
    1.71204761263407058e03,
    2.05107837782607147e03,
    1.23033935479799725e03,
    2.15311535474403846e-8,
)
_ERF_D = (
    1.57449261107098347e01,
    1.17693950891312499e02,
    5.37181101862009858e02,
    1.62138957456669019e03,
    3.29079923573345963e03,
    4.36261909014324716e03,
    3.43936767414372164e03,
    1.23033935480374942e03,
)
_ERF_P = (
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
)
_ERF_Q = (
    2.56852019228982242e00,
    1.87295284992346047e00,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
)
_ONE_OVER_SQRT_PI = 5.6418958354775628695e-1
_ERF_THRESHOLD = 0.46875


def _erfc_scaled_tail(y: float) -> float:
    """erfc(y) for y > threshold via the two rational tail expansions."""
    if y <= 4.0:
        num = _ERF_C[8] * y
        den = y
        for i in range(7):
            num = (num + _ERF_C[i]) * y
            den = (den + _ERF_D[i]) * y
        result = (num + _ERF_C[7]) / (den + _ERF_D[7])
    else:
        if y >= 26.5:
            return 0.0
        inv_sq = 1.0 / (y * y)
        num = _ERF_P[5] * inv_sq
        den = inv_sq
        for i in range(4):
            num = (num + _ERF_P[i]) * inv_sq
            den = (den + _ERF_Q[i]) * inv_sq
        result = inv_sq * (num + _ERF_P[4]) / (den + _ERF_Q[4])
        result = (_ONE_OVER_SQRT_PI - result) / y
    # split the exponential to preserve precision in exp(-y*y)
    y_trunc = math.floor(y * 16.0) / 16.0
    delta = (y - y_trunc) * (y + y_trunc)
    return math.exp(-y_trunc * y_trunc) * math.exp(-delta) * result


def _erfc(x: float) -> float:
    y = abs(x)
    if y <= _ERF_THRESHOLD:
        z = y * y
        num = _ERF_A[4] * z
        den = z
        for i in range(3):
            num = (num + _ERF_A[i]) * z
            den = (den + _ERF_B[i]) * z
        erf = x * (num + _ERF_A[3]) / (den + _ERF_B[3])
        return 1.0 - erf
    tail = _erfc_scaled_tail(y)
    return 2.0 - tail if x < 0 else tail


def normal_cdf(z: float) -> float:
    """Standard normal distribution function Phi(z)."""
    if math.isnan(z):
        raise ValueError("z must be a finite real")
    return 0.5 * _erfc(-z / math.sqrt(2.0))


def normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


# Acklam's inverse-normal coefficients (central and tail regions)
_PPF_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_PPF_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_PPF_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_PPF_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_PPF_LOW = 0.02425


def normal_ppf(p: float) -> float:
    """Standard normal quantile, the inverse of :func:`normal_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly between 0 and 1, got {p}")
    if p < _PPF_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (
            ((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q + _PPF_C[4]) * q
            + _PPF_C[5]
        ) / ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1.0)
    elif p <= 1.0 - _PPF_LOW:
        q = p - 0.5
        r = q * q
        x = (
            (((((_PPF_A[0] * r + _PPF_A[1]) * r + _PPF_A[2]) * r + _PPF_A[3]) * r + _PPF_A[4]) * r + _PPF_A[5])
            * q
            / (((((_PPF_B[0] * r + _PPF_B[1]) * r + _PPF_B[2]) * r + _PPF_B[3]) * r + _PPF_B[4]) * r + 1.0)
        )
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(
            ((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q + _PPF_C[4]) * q
            + _PPF_C[5]
        ) / ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1.0)
    # one Halley step drives the approximation to machine precision
    err = normal_cdf(x) - p
    u = err / normal_pdf(x)
    return x - u / (1.0 + x * u / 2.0)


# ===== Proportion z-test =====


@dataclass(frozen=True)
class ZTestResult:
    """A one-sample proportion z-test against a fixed null proportion."""

    x: int
    n: int
    p_hat: float
    pi0: float
    alternative: str
    z: float
    p_value: float
    ci_level: float
    ci: tuple[float, float]
    h0_rejected: bool


def proportion_ztest(
    x: int,
    n: int,
    pi0: float = DEFAULT_NULL_PROPORTION,
    alternative: str = "two-sided",
    *,
    ci_level: float = DEFAULT_CI_LEVEL,
    significance: float = DEFAULT_SIGNIFICANCE,
    min_n: int = DEFAULT_MIN_TRIALS,
) -> ZTestResult:
    """Test whether a success proportion differs from ``pi0``.

    Uses the normal approximation z = (p_hat - pi0) / sqrt(pi0(1-pi0)/n)
    with a Wald interval around p_hat. The interval is one-sided when the
    alternative is; the reported bound matches the test direction.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    if not 0.0 < pi0 < 1.0:
        raise ValueError(f"pi0 must lie strictly between 0 and 1, got {pi0}")
    if not 0 <= x <= n:
        raise ValueError(f"successes must lie in [0, n], got x={x}, n={n}")
    if n < min_n:
        raise InsufficientSample(f"need at least {min_n} trials, got {n}")

    p_hat = x / n
    z = (p_hat - pi0) / math.sqrt(pi0 * (1.0 - pi0) / n)
    p_less = normal_cdf(z)
    if alternative == "less":
        p_value = p_less
    elif alternative == "greater":
        p_value = 1.0 - p_less
    else:
        p_value = min(1.0, 2.0 * (1.0 - normal_cdf(abs(z))))

    se_hat = math.sqrt(p_hat * (1.0 - p_hat) / n)
    alpha = 1.0 - ci_level
    if alternative == "two-sided":
        margin = normal_ppf(1.0 - alpha / 2.0) * se_hat
        ci = (p_hat - margin, p_hat + margin)
    elif alternative == "greater":
        ci = (p_hat - normal_ppf(1.0 - alpha) * se_hat, 1.0)
    else:
        ci = (0.0, p_hat + normal_ppf(1.0 - alpha) * se_hat)

    return ZTestResult(
        x=x,
        n=n,
        p_hat=p_hat,
        pi0=pi0,
        alternative=alternative,
        z=z,
        p_value=p_value,
        ci_level=ci_level,
        ci=ci,
        h0_rejected=p_value < significance,
    )


def render_p_value(p: float) -> str:
    """Fixed five-decimal rendering; tiny values print as 0.00000."""
    if p < _P_DISPLAY_FLOOR:
        return "0.00000"
    return f"{p:.5f}"


# ===== Contingency table =====


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Counts of fun/not-fun crossed with learning/not-learning."""

    fun_learning: int
    fun_not_learning: int
    not_fun_learning: int
    not_fun_not_learning: int

    @property
    def total(self) -> int:
        return (
            self.fun_learning
            + self.fun_not_learning
            + self.not_fun_learning
            + self.not_fun_not_learning
        )


def crosstab(pairs: list[tuple[bool, bool]]) -> ContingencyTable2x2:
    """Count (fun, learned) outcome pairs into the four cells."""
    cells = [[0, 0], [0, 0]]
    for fun, learned in pairs:
        cells[0 if fun else 1][0 if learned else 1] += 1
    return ContingencyTable2x2(
        fun_learning=cells[0][0],
        fun_not_learning=cells[0][1],
        not_fun_learning=cells[1][0],
        not_fun_not_learning=cells[1][1],
    )


# ===== Session analysis =====


@dataclass(frozen=True)
class SurveyAnalysis:
    """The analysis bundle for one batch of session summaries."""

    fun_test: ZTestResult
    learning_test: ZTestResult
    table: ContingencyTable2x2
    total_sessions: int
    eligible_sessions: int


def analyze_sessions(
    records: list[dict],
    *,
    ci_level: float = DEFAULT_CI_LEVEL,
    significance: float = DEFAULT_SIGNIFICANCE,
    min_n: int = DEFAULT_MIN_TRIALS,
) -> SurveyAnalysis:
    """Run both proportion tests and the crosstab over session summaries.

    Each record carries a ``fun`` report plus ``pre_exam``/``post_exam``
    knowledge bits. Learning is assessed only on sessions that started
    without prior knowledge (pre_exam 0); improvement means post_exam 1.
    """
    fun_count = sum(1 for r in records if r["fun"])
    eligible = [r for r in records if r["pre_exam"] == 0]
    improved = sum(1 for r in eligible if r["post_exam"] == 1)
    fun_test = proportion_ztest(
        fun_count,
        len(records),
        alternative="greater",
        ci_level=ci_level,
        significance=significance,
        min_n=min_n,
    )
    learning_test = proportion_ztest(
        improved,
        len(eligible),
        alternative="greater",
        ci_level=ci_level,
        significance=significance,
        min_n=min_n,
    )
    table = crosstab([(bool(r["fun"]), r["post_exam"] == 1) for r in eligible])
    return SurveyAnalysis(
        fun_test=fun_test,
        learning_test=learning_test,
        table=table,
        total_sessions=len(records),
        eligible_sessions=len(eligible),
    )


def _format_test(title: str, result: ZTestResult) -> list[str]:
    level = int(round(result.ci_level * 100))
    verdict = "rejected" if result.h0_rejected else "not rejected"
    return [
        title,
        f"  successes {result.x} of {result.n}  (proportion {result.p_hat:.5f})",
        f"  z = {result.z:.5f}  p-value ({result.alternative}) = {render_p_value(result.p_value)}",
        f"  {level}% CI [{result.ci[0]:.5f}, {result.ci[1]:.5f}]",
        f"  H0 pi = {result.pi0:g} {verdict}",
        "",
    ]


def format_report(analysis: SurveyAnalysis) -> str:
    """Human-readable summary of both tests and the contingency table."""
    t = analysis.table
    lines = [
        "Survey analysis",
        "===============",
        f"sessions analyzed: {analysis.total_sessions}"
        f" (learning-eligible: {analysis.eligible_sessions})",
        "",
    ]
    lines += _format_test("Proportion of sessions reported fun", analysis.fun_test)
    lines += _format_test("Proportion of improved learning", analysis.learning_test)
    width = max(len(str(c)) for c in (t.fun_learning, t.fun_not_learning, t.not_fun_learning, t.not_fun_not_learning))
    width = max(width, len("Learning"))
    lines += [
        "Learning outcome by fun report",
        f"  {'':8s} {'Learning':>{width}s} {'NotLearning':>11s}",
        f"  {'Fun':8s} {t.fun_learning:>{width}d} {t.fun_not_learning:>11d}",
        f"  {'NotFun':8s} {t.not_fun_learning:>{width}d} {t.not_fun_not_learning:>11d}",
        f"  total pairs: {t.total}",
    ]
    return "\n".join(lines) + "\n"


def report_rows(analysis: SurveyAnalysis) -> list[tuple[str, str]]:
    """(metric, value) rows backing the text report, for CSV export."""
    rows: list[tuple[str, str]] = [
        ("total_sessions", str(analysis.total_sessions)),
        ("eligible_sessions", str(analysis.eligible_sessions)),
    ]
    for name, test in (("fun", analysis.fun_test), ("learning", analysis.learning_test)):
        rows += [
            (f"{name}_successes", str(test.x)),
            (f"{name}_trials", str(test.n)),
            (f"{name}_proportion", repr(test.p_hat)),
            (f"{name}_z", repr(test.z)),
            (f"{name}_p_value", render_p_value(test.p_value)),
            (f"{name}_ci_low", repr(test.ci[0])),
            (f"{name}_ci_high", repr(test.ci[1])),
            (f"{name}_h0_rejected", str(test.h0_rejected).lower()),
        ]
    t = analysis.table
    rows += [
        ("fun_learning", str(t.fun_learning)),
        ("fun_not_learning", str(t.fun_not_learning)),
        ("not_fun_learning", str(t.not_fun_learning)),
        ("not_fun_not_learning", str(t.not_fun_not_learning)),
    ]
    return rows
