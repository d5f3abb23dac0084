"""polyprobe: multilingual cloze-template consistency probing harness."""

__version__ = "0.1.0"
