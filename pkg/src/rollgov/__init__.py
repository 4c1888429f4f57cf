"""Reference governors for steering-induced rollover avoidance."""
