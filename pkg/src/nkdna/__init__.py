"""Neural knowledge containers: States, Actions, Experiences and Networks."""

__version__ = "0.1.0"
