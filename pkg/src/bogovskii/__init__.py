"""Classical solutions of div v = F with zero boundary values via the Bogovskii formula."""

__version__ = "0.1.0"
