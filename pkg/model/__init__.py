"""
Time-aware Transformer nowcaster: event encoder, masked attention stack, nowcast head
"""
