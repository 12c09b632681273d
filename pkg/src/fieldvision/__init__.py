"""Fixed-camera robot-soccer video analytics.

Pipeline stages: camera calibration and field homography, background
subtraction, multi-object tracking, field-plane localization, rule-based
event detection, identity association, and statistics rendering.
"""

__version__ = "0.1.0"
