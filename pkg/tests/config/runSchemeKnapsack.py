# Knapsack scheme at half activation
config.trials = 20000
config.scheme.scheme = 'knapsack'
config.scheme.b = 0.5
