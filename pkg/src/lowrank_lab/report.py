"""Check results shared by the verification ops, the runner, and the CLI."""

from dataclasses import dataclass


@dataclass
class CheckResult:
    """One verified claim: |lhs - rhs| style gap against a tolerance."""

    check: str
    lhs: float
    rhs: float
    gap: float
    tolerance: float
    passed: bool

    @classmethod
    def from_gap(cls, check: str, lhs: float, rhs: float, tolerance: float) -> "CheckResult":
        gap = abs(float(lhs) - float(rhs))
        return cls(check, float(lhs), float(rhs), gap, float(tolerance), gap <= tolerance)

    @classmethod
    def bound(cls, check: str, value: float, tolerance: float) -> "CheckResult":
        """A one-sided claim: value must not exceed tolerance."""
        value = float(value)
        return cls(check, value, 0.0, value, float(tolerance), value <= tolerance)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def all_passed(checks) -> bool:
    return all(c.passed for c in checks)


def format_table(checks) -> str:
    lines = []
    width = max((len(c.check) for c in checks), default=10)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(
            f"{status}  {c.check:<{width}}  gap={c.gap:.3e}  tol={c.tolerance:.1e}"
        )
    return "\n".join(lines)
