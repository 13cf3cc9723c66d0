"""Declarative feature schema for Tier-1 account features.

Columns are always laid out in the fixed category order
``user_meta | embedding | tweet_meta | temporal``; the same order is used by
the CSV format, the representation layer and the attack grids.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError

USER_META_NAMES = (
    "followers_count",
    "friends_count",
    "listed_count",
    "verified",
    "user_age",
    "follower_growth_rate",
    "friends_growth_rate",
    "listed_growth_rate",
    "followers_friend_ratio",
    "name_length",
    "username_length",
    "description_length",
    "num_digits_in_name",
    "num_digits_in_username",
    "names_ratio",
    "name_freq",
    "name_entropy",
    "username_entropy",
    "description_entropy",
    "description_sentiment",
    "names_sim",
    "url_in_description",
    "bot_in_names",
    "hashtag_in_description",
    "hashtag_in_name",
    "numbers_in_description",
    "numbers_in_name",
    "numbers_in_username",
    "emojis_in_description",
    "emojis_in_name",
    "favourites_count",
    "status_count",
    "default_profile",
)

TWEET_META_NAMES = (
    "mean_no_emoticons",
    "mean_no_urls_per_tweet",
    "mean_no_media_per_tweet",
    "mean_no_words",
    "no_languages",
    "mean_no_hashtags",
    "mean_number_of_positive_emoticons_per_tweet",
    "mean_number_of_negative_emoticons_per_tweet",
    "mean_number_of_neutral_emoticons_per_tweet",
    "mean_tweet_sentiment",
    "mean_positive_valence_score_per_tweet",
    "mean_negative_valence_score_per_tweet",
    "mean_neutral_valence_score_per_tweet",
    "positive_valence_score_of_aggregated_tweets",
    "negative_valence_score_of_aggregated_tweets",
    "neutral_valence_score_of_aggregated_tweets",
    "mean_positive_and_negative_score_ratio_per_tweet",
    "mean_emoticons_entropy_per_tweet",
    "mean_emoticons_entropy_of_aggregated_tweets",
    "mean_negative_emoticons_entropy_of_aggregated_tweets",
    "mean_positive_emoticons_entropy_of_aggregated_tweets",
    "mean_neutral_emoticons_entropy_of_aggregated_tweets",
    "mean_positive_emoticons_entropy_per_tweet",
    "mean_negative_emoticons_entropy_per_tweet",
    "mean_neutral_emoticons_entropy_per_tweet",
    "mean_favourites_per_tweet",
    "mean_retweets_per_tweet",
    "no_retweet_tweets",
    "retweet_as_tweet_rate",
)

TEMPORAL_NAMES = (
    "time_between_tweets",
    "tweet_frequency",
    "min_tweets_per_hour",
    "min_tweets_per_day",
    "max_tweets_per_hour",
    "max_tweets_per_day",
    "max_occurence_of_same_gap",
)

DEFAULT_EMBEDDING_DIM = 768

CATEGORIES = ("user_meta", "embedding", "tweet_meta", "temporal")


@dataclass(frozen=True)
class FeatureSchema:
    user_meta_names: tuple = USER_META_NAMES
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    tweet_meta_names: tuple = TWEET_META_NAMES
    temporal_names: tuple = TEMPORAL_NAMES
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        for attr in ("user_meta_names", "tweet_meta_names", "temporal_names"):
            object.__setattr__(self, attr, tuple(str(n) for n in getattr(self, attr)))
            if not getattr(self, attr):
                raise ConfigurationError(f"{attr} must not be empty", field=attr)
        if int(self.embedding_dim) < 1:
            raise ConfigurationError("embedding_dim must be >= 1", field="embedding_dim")
        object.__setattr__(self, "embedding_dim", int(self.embedding_dim))
        names = self.column_names
        if len(set(names)) != len(names):
            seen, dupes = set(), []
            for n in names:
                if n in seen:
                    dupes.append(n)
                seen.add(n)
            raise ConfigurationError(f"duplicate feature names: {sorted(set(dupes))}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def embedding_names(self):
        return tuple(f"embedding_{i}" for i in range(self.embedding_dim))

    @property
    def widths(self):
        """Widths of the four categories, in layout order."""
        return (
            len(self.user_meta_names),
            self.embedding_dim,
            len(self.tweet_meta_names),
            len(self.temporal_names),
        )

    @property
    def total_width(self):
        return sum(self.widths)

    @property
    def column_names(self):
        return (
            self.user_meta_names
            + self.embedding_names
            + self.tweet_meta_names
            + self.temporal_names
        )

    def slices(self):
        """Map category name -> column slice."""
        out, start = {}, 0
        for cat, w in zip(CATEGORIES, self.widths):
            out[cat] = slice(start, start + w)
            start += w
        return out

    def category_of(self, name):
        idx = self.column_index(name)
        for cat, sl in self.slices().items():
            if sl.start <= idx < sl.stop:
                return cat
        raise AssertionError("unreachable")

    def column_index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise ConfigurationError(f"unknown feature column {name!r}") from None

    @property
    def normalized_columns(self):
        """Every column except the embedding block."""
        emb = self.slices()["embedding"]
        return tuple(i for i in range(self.total_width) if not emb.start <= i < emb.stop)

    def to_dict(self):
        return {
            "user_meta_names": list(self.user_meta_names),
            "embedding_dim": self.embedding_dim,
            "tweet_meta_names": list(self.tweet_meta_names),
            "temporal_names": list(self.temporal_names),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                user_meta_names=tuple(d["user_meta_names"]),
                embedding_dim=int(d["embedding_dim"]),
                tweet_meta_names=tuple(d["tweet_meta_names"]),
                temporal_names=tuple(d["temporal_names"]),
            )
        except KeyError as e:
            raise ConfigurationError(f"schema is missing key {e.args[0]!r}") from None

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
