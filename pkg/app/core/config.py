from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    """
    프로세스 단위 설정을 관리하는 클래스.
    .env 파일과 환경 변수에서 값을 로드함.

    실행(run) 단위 하이퍼파라미터는 `app.models.config_models.RunConfig`가 담당하고,
    여기에는 로깅/출력 경로처럼 실행과 무관하게 공유되는 값만 둠.
    """

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # Project Settings
    PROJECT_NAME: str = "UltraStar Probe Navigation"
    app_version: str = "0.1.0"
    ENVIRONMENT: str = "development"

    # Default Paths
    DEFAULT_OUTPUT_DIR: str = "outputs"
    DEFAULT_CORPUS_DIR: str = "data/corpus"
    DEFAULT_SEED: int = Field(default=0, description="CLI에서 --seed 미지정 시 사용")

    # Logging Settings
    LOG_LEVEL: str | None = None
    LOG_FILE_PATH: str = "logs/ustar.log"
    LOG_ROTATION_WHEN: str = "midnight"
    LOG_ROTATION_INTERVAL: int = 1
    LOG_ROTATION_BACKUP_COUNT: int = 7

    @property
    def effective_log_level(self) -> str:
        """
        명시된 LOG_LEVEL이 없으면 환경에 따라 결정
        개발 환경은 DEBUG, 그 외는 INFO
        """
        if self.LOG_LEVEL:
            return self.LOG_LEVEL.upper()
        return "DEBUG" if self.ENVIRONMENT == "development" else "INFO"


# 싱글톤처럼 사용하기 위해 인스턴스 생성
settings = Settings()
