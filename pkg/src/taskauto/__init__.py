"""Cost-minimising AI automation of vision tasks."""
