# Benchmark harness: experiment configs, trajectory runs and the prospect-bench CLI.
