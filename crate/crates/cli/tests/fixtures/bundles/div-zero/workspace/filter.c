#include "filter.h"
#include "stats.h"

int filter_apply(const int *samples, int count, int threshold, int *out) {
    int kept = 0;
    for (int i = 0; i < count; i++) {
        if (samples[i] > threshold) {
            out[kept] = samples[i];
            kept++;
        }
    }
    return kept;
}

int filter_summary(const int *samples, int count, int threshold) {
    int kept[16];
    int n = filter_apply(samples, count, threshold, kept);
    return mean(kept, n);
}
