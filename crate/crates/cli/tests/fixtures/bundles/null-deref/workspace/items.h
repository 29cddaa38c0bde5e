#ifndef TOY_ITEMS_H
#define TOY_ITEMS_H
struct item {
    int id;
    int weight;
};
struct item *alloc_item(int id);
struct item *find_item(int id);
int item_weight(struct item *it);
#endif
