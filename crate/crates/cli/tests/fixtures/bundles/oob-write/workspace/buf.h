#ifndef TOY_BUF_H
#define TOY_BUF_H
#define BUF_MAX 16
struct buf {
    int cap;
    int used;
    int data[BUF_MAX];
};
void buf_init(struct buf *b, int cap);
void buf_put(struct buf *b, int index, int value);
void buf_fill(struct buf *b, int count);
#endif
