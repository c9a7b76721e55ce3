"""Organ label registry (0 is background)."""

ORGANS = {
    1: "Brain stem",
    2: "Left eye",
    3: "Right eye",
    4: "Left lens of the eye",
    5: "Right lens of the eye",
    6: "Left optic nerve",
    7: "Right optic nerve",
    8: "Optic chiasma",
    9: "Left temporal lobes",
    10: "Right temporal lobes",
    11: "Pituitary gland",
    12: "Left parotid gland",
    13: "Right parotid gland",
    14: "Left inner ear",
    15: "Right inner ear",
    16: "Left mid ear",
    17: "Right mid ear",
    18: "Left temporomandibular joint",
    19: "Right temporomandibular joint",
    20: "Spinal cord",
}

BACKGROUND = 0
LEFT_EYE, RIGHT_EYE = 2, 3
LEFT_LENS, RIGHT_LENS = 4, 5


def organ_name(index: int) -> str:
    if index == BACKGROUND:
        return "Background"
    return ORGANS[index]
