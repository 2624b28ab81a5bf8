from primnav.examples.desk_scale.parameters_desk import *
