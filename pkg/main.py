#!/usr/bin/env python3
"""
UltraStar 프로브 내비게이션 파이프라인 엔트리포인트
합성 코퍼스 생성, 학습, 평가, 스윕을 하나의 CLI로 실행
"""
import sys

from app.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
