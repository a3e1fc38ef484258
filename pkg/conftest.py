# keeps the repository root importable so figures/ tests resolve
