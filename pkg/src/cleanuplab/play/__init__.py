from cleanuplab.play.session import PlaySession, SessionConfig

__all__ = ["PlaySession", "SessionConfig"]
