#ifndef TOY_LOG_H
#define TOY_LOG_H
void log_line(const char *msg);
#endif
