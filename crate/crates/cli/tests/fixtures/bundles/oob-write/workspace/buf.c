#include <stdio.h>
#include <stdlib.h>
#include "buf.h"

void buf_init(struct buf *b, int cap) {
    b->cap = cap;
    b->used = 0;
}

void buf_put(struct buf *b, int index, int value) {
    if (index < 0 || index >= b->cap) {
        fprintf(stderr, "=== CRASH: oob-write ===\n");
        fprintf(stderr, "#0 buf_put buf.c\n");
        fprintf(stderr, "#1 buf_fill buf.c\n");
        fprintf(stderr, "#2 main main.c\n");
        fprintf(stderr, "=== END CRASH ===\n");
        exit(42);
    }
    b->data[index] = value;
    if (index >= b->used)
        b->used = index + 1;
}

void buf_fill(struct buf *b, int count) {
    for (int i = 0; i <= count; i++) {
        buf_put(b, i, i * 3);
    }
}
