"""
도메인 예외 계층

CLI는 UltraStarError를 잡아 stderr에 JSON 한 줄을 출력하고 exit_code로 종료함.
- ValidationFailure 계열: 입력/설정/파일 형식 문제 (exit 1)
- RuntimeFailure 계열: 실행 중 실패 (exit 2)
"""

from typing import Any, Dict, Optional


class UltraStarError(Exception):
    """모든 도메인 예외의 기반 클래스"""

    code: str = "ustar_error"
    exit_code: int = 2

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details or {}

    def to_payload(self) -> Dict[str, Any]:
        """CLI 오류 JSON 페이로드"""
        return {
            "error": self.code,
            "message": self.message,
            "details": self.details,
            "exit_code": self.exit_code,
        }


class ValidationFailure(UltraStarError, ValueError):
    code = "validation_error"
    exit_code = 1


class RuntimeFailure(UltraStarError, RuntimeError):
    code = "runtime_error"
    exit_code = 2


class ConfigError(ValidationFailure):
    code = "config_error"


class ScanFormatError(ValidationFailure):
    """스캔 파일 형식 오류. 경로, 줄 번호, 필드를 함께 보고함."""

    code = "scan_format_error"

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        full = f"{', '.join(location)}: {message}" if location else message
        super().__init__(full, details={"path": path, "line": line, "field": field})
        self.path = path
        self.line = line
        self.field = field


class PoseGeometryError(ValidationFailure):
    code = "pose_geometry_error"


class ShapeError(ValidationFailure):
    code = "shape_error"


class FeatureLookupError(ValidationFailure, KeyError):
    code = "feature_lookup_error"

    def __str__(self) -> str:
        # KeyError는 repr로 감싸므로 메시지를 그대로 반환
        return self.message


class SimulationError(RuntimeFailure):
    code = "simulation_error"


class CheckpointError(RuntimeFailure):
    code = "checkpoint_error"


class SweepError(RuntimeFailure):
    code = "sweep_error"
