"""Policy switching over load-shedding and islanding remedial action schemes."""
