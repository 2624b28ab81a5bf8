from primnav.world import Box, WorldSpec

ROOM = Box((-0.5, -0.5, 0.0), (3.0, 3.0, 2.5))
FLIGHT_HEIGHT = 1.0
# about 3.46 m along the room diagonal, seven half-meter steps
LAB_PATH_START = (0.0, 0.0, FLIGHT_HEIGHT)
LAB_PATH_END = (2.45, 2.45, FLIGHT_HEIGHT)


def lab_worlds() -> dict[str, WorldSpec]:
    worlds = [
        WorldSpec("lab-free", LAB_PATH_START, LAB_PATH_END, ROOM),
        WorldSpec(
            "lab-obstacles",
            LAB_PATH_START,
            LAB_PATH_END,
            ROOM,
            (
                Box((0.7, 0.3, 0.0), (1.3, 1.1, 2.5)),
                Box((1.6, 1.3, 0.0), (2.2, 2.1, 2.5)),
            ),
        ),
    ]
    return {world.name: world for world in worlds}
