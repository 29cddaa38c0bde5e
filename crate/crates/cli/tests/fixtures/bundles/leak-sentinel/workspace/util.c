#include "util.h"

int clamp(int value, int lo, int hi) {
    if (value < lo)
        return lo;
    if (value > hi)
        return hi;
    return value;
}

int imax(int a, int b) {
    return a > b ? a : b;
}
