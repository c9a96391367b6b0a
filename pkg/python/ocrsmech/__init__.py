#
# See COPYRIGHT file at the top of the source tree
#

from .errors import *
from .utilities import *
from .constraints import *
from .twoLevelProcess import *
from .instances import *
from .simplex import *
from .interimLp import *
from .bruteForceOracle import *
from .bernoulli import *
from .estimation import *
from .schemes import *
from .vhSchemes import *
from .knapsackSchemes import *
from .stochasticKnapsack import *
from .schemeFactory import *
from .runTrace import *
from .mechanism import *
from .procurement import *
from .ocrsTaskBase import *
from .ocrsGenerateInstance import *
from .ocrsSolveLp import *
from .ocrsRunScheme import *
from .ocrsRunMechanism import *
from .ocrsRunProcurement import *
from .ocrsBernoulliBench import *
from .ocrsVerify import *
from .reports import *
from .version import *
