from primnav.parameters import *
from primnav.report import *
