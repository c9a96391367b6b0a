# Full-size acceptance run: ocrsmech.py --config config/verifyAcceptance.py verify
config.nInstances = 20
config.oracleInstances = 50
config.gridAgents = 5
config.gridItems = 5
config.gridTypes = 3
config.trials = 200000
config.bernoulli.trials = 1000000
config.bernoulli.p0List = [0.1, 0.25, 0.4]
config.bernoulli.p1List = [0.6, 0.5, 0.9]
