# EntAugment package init
__version__ = "0.1.0"
