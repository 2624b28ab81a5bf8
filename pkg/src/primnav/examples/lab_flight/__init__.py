from primnav.examples.lab_flight.parameters_lab import *
from primnav.examples.lab_flight.worlds_lab import *
