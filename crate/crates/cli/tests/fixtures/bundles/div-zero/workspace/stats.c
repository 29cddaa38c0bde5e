#include <stdio.h>
#include <stdlib.h>
#include "stats.h"

int mean(const int *values, int count) {
    if (count == 0) {
        fprintf(stderr, "=== CRASH: divide-by-zero ===\n");
        fprintf(stderr, "#0 mean stats.c\n");
        fprintf(stderr, "#1 filter_summary filter.c\n");
        fprintf(stderr, "#2 main main.c\n");
        fprintf(stderr, "=== END CRASH ===\n");
        exit(42);
    }
    int sum = 0;
    for (int i = 0; i < count; i++) {
        sum += values[i];
    }
    return sum / count;
}
