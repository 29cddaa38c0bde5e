#include <stdio.h>
#include "log.h"

void log_line(const char *msg) {
    fprintf(stderr, "[toy] %s\n", msg);
}
