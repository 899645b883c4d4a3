# fixiter: fixed-point iteration toolkit
__version__ = "0.1.0"
