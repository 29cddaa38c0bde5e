#include <stdio.h>
#include "filter.h"
#include "log.h"

int main(void) {
    int samples[4] = {5, 5, 5, 5};
    log_line("summarizing samples");
    int m = filter_summary(samples, 4, 5);
    printf("mean %d\n", m);
    return 0;
}
