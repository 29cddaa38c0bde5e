#include <stdio.h>
#include "config.h"
#include "engine.h"
#include "log.h"

int main(void) {
    config_reset();
    config_parse("turbo");
    log_line("config parsed");
    engine_start();
    printf("engine ok\n");
    return 0;
}
