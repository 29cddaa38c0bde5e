#ifndef TOY_UTIL_H
#define TOY_UTIL_H
int clamp(int value, int lo, int hi);
int imax(int a, int b);
#endif
