#include <stdio.h>
#include <stdlib.h>
#include "items.h"

#define POOL_CAP 8

static struct item pool[POOL_CAP];
static int pool_used = 0;

struct item *alloc_item(int id) {
    if (pool_used >= POOL_CAP)
        return NULL;
    pool[pool_used].id = id;
    pool[pool_used].weight = id * 2;
    pool_used++;
    return &pool[pool_used - 1];
}

struct item *find_item(int id) {
    for (int i = 0; i < pool_used; i++) {
        if (pool[i].id == id)
            return &pool[i];
    }
    return NULL;
}

int item_weight(struct item *it) {
    if (!it) {
        fprintf(stderr, "=== CRASH: null-deref ===\n");
        fprintf(stderr, "#0 item_weight items.c\n");
        fprintf(stderr, "#1 report_weights main.c\n");
        fprintf(stderr, "=== END CRASH ===\n");
        exit(42);
    }
    return it->weight;
}
