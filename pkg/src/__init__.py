# src/__init__.py
"""panofuse - pseudo-label generation and knowledge-adaptation losses for ERP segmentation"""

__version__ = "1.0.0"
