from .engine import SegmentationEngine
from .main import main

__all__ = ['SegmentationEngine', 'main']
